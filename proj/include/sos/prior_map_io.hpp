#pragma once

// Prior-map binary format:
//
//   "OPRIOR1\n"
//   "<width> <height>\n"            ASCII decimals
//   height*width float32 values     little-endian, row-major
//
// Values must be finite and >= 0; no bytes may follow the payload.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "sos/error.hpp"
#include "sos/grid.hpp"

namespace sos::io {

inline constexpr std::string_view kPriorMagic = "OPRIOR1\n";

inline std::string encode_prior_map(const RealGrid& map) {
    std::string out(kPriorMagic);
    out += std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n";
    out.reserve(out.size() + map.size() * 4);
    for (const double v : map.values()) {
        if (!std::isfinite(v) || v < 0.0) throw PreconditionError("prior map values must be finite and >= 0");
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
    return out;
}

inline RealGrid decode_prior_map(std::string_view bytes, const std::string& name = "prior map") {
    if (bytes.substr(0, kPriorMagic.size()) != kPriorMagic) throw ParseError(name + ": bad magic");
    std::size_t pos = kPriorMagic.size();
    const auto read_uint = [&](char terminator) {
        const std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') ++pos;
        if (pos == start || pos >= bytes.size() || bytes[pos] != terminator || pos - start > 9)
            throw ParseError(name + ": malformed dimension header");
        const long v = std::stol(std::string(bytes.substr(start, pos - start)));
        ++pos;
        return static_cast<int>(v);
    };
    const int width = read_uint(' ');
    const int height = read_uint('\n');
    if (width <= 0 || height <= 0) throw ParseError(name + ": dimensions must be positive");
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    const std::size_t have = bytes.size() - pos;
    if (have < 4 * count) throw ParseError(name + ": truncated payload (" + std::to_string(have) + " of " +
                                           std::to_string(4 * count) + " bytes)");
    if (have > 4 * count) throw ParseError(name + ": trailing data after payload");
    RealGrid map(height, width, 0.0);
    auto dst = map.values();
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 4 * i + b])) << (8 * b);
        const float f = std::bit_cast<float>(bits);
        if (!std::isfinite(f)) throw ParseError(name + ": non-finite value at index " + std::to_string(i));
        if (f < 0.0f) throw ParseError(name + ": negative value at index " + std::to_string(i));
        dst[i] = static_cast<double>(f);
    }
    return map;
}

inline void save_prior_map(const RealGrid& map, const std::filesystem::path& path) {
    const std::string bytes = encode_prior_map(map);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError("write failed: " + path.string());
}

inline RealGrid load_prior_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_prior_map(ss.str(), path.string());
}

namespace base64 {

inline std::string encode(std::string_view in) {
    static constexpr char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < in.size(); i += 3) {
        const std::uint32_t v = (static_cast<unsigned char>(in[i]) << 16) |
                                (static_cast<unsigned char>(in[i + 1]) << 8) | static_cast<unsigned char>(in[i + 2]);
        out += {tbl[(v >> 18) & 63], tbl[(v >> 12) & 63], tbl[(v >> 6) & 63], tbl[v & 63]};
    }
    if (i + 1 == in.size()) {
        const std::uint32_t v = static_cast<unsigned char>(in[i]) << 16;
        out += {tbl[(v >> 18) & 63], tbl[(v >> 12) & 63], '=', '='};
    } else if (i + 2 == in.size()) {
        const std::uint32_t v = (static_cast<unsigned char>(in[i]) << 16) | (static_cast<unsigned char>(in[i + 1]) << 8);
        out += {tbl[(v >> 18) & 63], tbl[(v >> 12) & 63], tbl[(v >> 6) & 63], '='};
    }
    return out;
}

inline std::string decode(std::string_view in) {
    const auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (in.size() % 4 != 0) throw ParseError("base64 length is not a multiple of 4");
    std::string out;
    out.reserve(in.size() / 4 * 3);
    for (std::size_t i = 0; i < in.size(); i += 4) {
        const bool last = i + 4 == in.size();
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = in[i + k];
            if (c == '=' && last && k >= 2) {
                v[k] = 0;
                ++pad;
                continue;
            }
            if (pad > 0 || (v[k] = val(c)) < 0) throw ParseError("invalid base64 character");
        }
        const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<char>((n >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<char>((n >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<char>(n & 0xFF));
    }
    return out;
}

}  // namespace base64

}  // namespace sos::io
