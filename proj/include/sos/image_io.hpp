#pragma once

// Raster I/O: PNG (libpng simplified API) and binary PPM/PGM.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sos/error.hpp"
#include "sos/grid.hpp"
#include "sos/image.hpp"

namespace sos::io {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

inline bool has_png_signature(const std::string& bytes) {
    return bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0;
}

struct Netpbm {
    char kind = 0;  // '5' gray, '6' rgb
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t offset = 0;
};

inline Netpbm parse_netpbm_header(const std::string& bytes, const std::string& name) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw ParseError(name + ": not a binary PGM/PPM (P5/P6)");
    Netpbm h;
    h.kind = bytes[1];
    std::size_t pos = 2;
    int fields[3] = {0, 0, 0};
    for (int& f : fields) {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw ParseError(name + ": malformed netpbm header");
        f = std::stoi(bytes.substr(start, pos - start));
    }
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw ParseError(name + ": malformed netpbm header");
    h.width = fields[0];
    h.height = fields[1];
    h.maxval = fields[2];
    h.offset = pos + 1;
    if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535)
        throw ParseError(name + ": bad netpbm dimensions or maxval");
    const std::size_t channels = h.kind == '6' ? 3 : 1;
    const std::size_t bps = h.maxval > 255 ? 2 : 1;
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height * channels * bps;
    if (bytes.size() - h.offset < need) throw ParseError(name + ": truncated netpbm payload");
    return h;
}

inline int netpbm_sample(const std::string& bytes, const Netpbm& h, std::size_t i) {
    if (h.maxval > 255) {
        const auto hi = static_cast<unsigned char>(bytes[h.offset + 2 * i]);
        const auto lo = static_cast<unsigned char>(bytes[h.offset + 2 * i + 1]);
        return (hi << 8) | lo;
    }
    return static_cast<unsigned char>(bytes[h.offset + i]);
}

class PngReader {
public:
    PngReader(const std::string& bytes, const std::string& name) : name_(name) {
        std::memset(&img_, 0, sizeof img_);
        img_.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_memory(&img_, bytes.data(), bytes.size()))
            throw ParseError(name_ + ": " + img_.message);
    }
    ~PngReader() { png_image_free(&img_); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    png_image& image() { return img_; }

    template <typename T>
    std::vector<T> finish(png_uint_32 format) {
        img_.format = format;
        std::vector<T> buf(PNG_IMAGE_SIZE(img_) / sizeof(T));
        if (!png_image_finish_read(&img_, nullptr, buf.data(), 0, nullptr))
            throw ParseError(name_ + ": " + img_.message);
        return buf;
    }

private:
    png_image img_;
    std::string name_;
};

}  // namespace detail

/// Reads an 8-bit RGB image from PNG or binary PPM/PGM (gray is replicated to RGB).
inline RgbImage read_image(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    const std::string name = path.string();
    if (detail::has_png_signature(bytes)) {
        detail::PngReader reader(bytes, name);
        const int w = static_cast<int>(reader.image().width);
        const int h = static_cast<int>(reader.image().height);
        const auto buf = reader.finish<std::uint8_t>(PNG_FORMAT_RGB);
        RgbImage img(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 3;
                img(x, y) = {buf[o], buf[o + 1], buf[o + 2]};
            }
        return img;
    }
    const auto hdr = detail::parse_netpbm_header(bytes, name);
    RgbImage img(hdr.height, hdr.width);
    const std::size_t channels = hdr.kind == '6' ? 3 : 1;
    for (int y = 0; y < hdr.height; ++y)
        for (int x = 0; x < hdr.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * hdr.width + x) * channels;
            Rgb px{};
            for (std::size_t c = 0; c < 3; ++c) {
                const int v = detail::netpbm_sample(bytes, hdr, base + (channels == 3 ? c : 0));
                px[c] = static_cast<std::uint8_t>(hdr.maxval == 255 ? v : (v * 255 + hdr.maxval / 2) / hdr.maxval);
            }
            img(x, y) = px;
        }
    return img;
}

/// Reads an integer label image from 8/16-bit grayscale PNG or binary PGM. Values are taken verbatim.
inline LabelGrid read_labels(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    const std::string name = path.string();
    if (detail::has_png_signature(bytes)) {
        detail::PngReader reader(bytes, name);
        auto& im = reader.image();
        if (im.format & PNG_FORMAT_FLAG_COLOR) throw ParseError(name + ": label PNG must be grayscale");
        const int w = static_cast<int>(im.width);
        const int h = static_cast<int>(im.height);
        LabelGrid labels(h, w, 0);
        // 16-bit files are read linearly (no gamma change); 8-bit files stay 8-bit.
        if (im.format & PNG_FORMAT_FLAG_LINEAR) {
            const auto buf = reader.finish<std::uint16_t>(PNG_FORMAT_LINEAR_Y);
            for (std::size_t i = 0; i < buf.size(); ++i) labels.values()[i] = buf[i];
        } else {
            const auto buf = reader.finish<std::uint8_t>(PNG_FORMAT_GRAY);
            for (std::size_t i = 0; i < buf.size(); ++i) labels.values()[i] = buf[i];
        }
        return labels;
    }
    const auto hdr = detail::parse_netpbm_header(bytes, name);
    if (hdr.kind != '5') throw ParseError(name + ": label image must be PGM (P5)");
    LabelGrid labels(hdr.height, hdr.width, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) labels.values()[i] = detail::netpbm_sample(bytes, hdr, i);
    return labels;
}

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
    std::vector<std::uint8_t> buf;
    buf.reserve(img.size() * 3);
    for (const auto& px : img.values()) buf.insert(buf.end(), px.begin(), px.end());
    png_image im;
    std::memset(&im, 0, sizeof im);
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(img.width());
    im.height = static_cast<png_uint_32>(img.height());
    im.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&im, path.c_str(), 0, buf.data(), 0, nullptr))
        throw ParseError("cannot write " + path.string() + ": " + im.message);
}

/// Writes labels as a 16-bit grayscale PNG. Labels must lie in [0, 65535].
inline void write_label_png(const std::filesystem::path& path, const LabelGrid& labels) {
    std::vector<std::uint16_t> buf(labels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const auto v = labels.values()[i];
        if (v < 0 || v > 65535) throw PreconditionError("label out of 16-bit range");
        buf[i] = static_cast<std::uint16_t>(v);
    }
    png_image im;
    std::memset(&im, 0, sizeof im);
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(labels.width());
    im.height = static_cast<png_uint_32>(labels.height());
    im.format = PNG_FORMAT_LINEAR_Y;
    if (!png_image_write_to_file(&im, path.c_str(), 0, buf.data(), 0, nullptr))
        throw ParseError("cannot write " + path.string() + ": " + im.message);
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
    for (const auto& px : img.values()) out.write(reinterpret_cast<const char*>(px.data()), 3);
}

/// 8-bit PGM of a real map scaled so its maximum maps to 255.
inline void write_pgm_scaled(const std::filesystem::path& path, const RealGrid& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    double hi = 0.0;
    for (const double v : map.values()) hi = std::max(hi, v);
    out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
    for (const double v : map.values()) {
        const auto b = static_cast<unsigned char>(hi > 0.0 ? std::lround(255.0 * v / hi) : 0);
        out.put(static_cast<char>(b));
    }
}

}  // namespace sos::io
