#pragma once

// Client side of the model-bridge wire protocol: newline-delimited JSON over a
// local socket or a child process's stdio.
//
//   -> {"op":"segment","image_id":str,"image_path":str,"points":[{"x":int,"y":int}],"masks_per_prompt":int}
//   <- {"image_id":str,"results":[{"prompt_index":int,"segments":[{"rle":{"size":[h,w],"counts":[...]},"score":float}]}]}
//   -> {"op":"attention","image_id":str,"image_path":str}
//   <- {"image_id":str,"maps":[<base64 prior-map file>, ...]}
//   <- {"error":{"code":str,"message":str}}

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sos/coco_io.hpp"
#include "sos/error.hpp"
#include "sos/prior_map_io.hpp"
#include "sos/segmenter.hpp"

namespace sos {

namespace wire {

using nlohmann::json;

inline json segment_request(const ImageRef& image, const PromptSet& prompts, int masks_per_prompt) {
    json pts = json::array();
    for (const auto& p : prompts.points) pts.push_back({{"x", p.x}, {"y", p.y}});
    return {{"op", "segment"},
            {"image_id", std::to_string(image.id)},
            {"image_path", image.path},
            {"points", std::move(pts)},
            {"masks_per_prompt", masks_per_prompt}};
}

inline json attention_request(const ImageRef& image) {
    return {{"op", "attention"}, {"image_id", std::to_string(image.id)}, {"image_path", image.path}};
}

inline json parse_line(const std::string& line) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw ProtocolError("malformed JSON reply: " + std::string(e.what()));
    }
}

inline void raise_if_error(const json& reply) {
    if (!reply.is_object()) throw ProtocolError("reply is not a JSON object");
    const auto it = reply.find("error");
    if (it == reply.end()) return;
    std::string code = "error";
    std::string message;
    if (it->is_object()) {
        if (it->contains("code") && (*it)["code"].is_string()) code = (*it)["code"].get<std::string>();
        if (it->contains("message") && (*it)["message"].is_string()) message = (*it)["message"].get<std::string>();
    }
    throw ProtocolError(code, message);
}

inline void check_image_id(const json& reply, const ImageRef& image) {
    const auto it = reply.find("image_id");
    if (it == reply.end() || !it->is_string() || it->get<std::string>() != std::to_string(image.id))
        throw ProtocolError("reply image_id does not match request");
}

/// Parses and validates a segment reply. Any invariant violation is a ProtocolError.
inline std::vector<ScoredSegment> parse_segment_reply(const json& reply, const ImageRef& image,
                                                      const PromptSet& prompts, int masks_per_prompt) {
    raise_if_error(reply);
    check_image_id(reply, image);
    const auto rit = reply.find("results");
    if (rit == reply.end() || !rit->is_array()) throw ProtocolError("reply lacks a results array");
    std::vector<ScoredSegment> out;
    long long last_index = -1;
    for (const auto& r : *rit) {
        if (!r.is_object() || !r.contains("prompt_index") || !r["prompt_index"].is_number_integer())
            throw ProtocolError("result lacks an integer prompt_index");
        const auto idx = r["prompt_index"].get<long long>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= prompts.size())
            throw ProtocolError("prompt_index " + std::to_string(idx) + " out of range");
        if (idx <= last_index) throw ProtocolError("results not in ascending prompt order");
        last_index = idx;
        if (!r.contains("segments") || !r["segments"].is_array()) throw ProtocolError("result lacks a segments array");
        for (const auto& s : r["segments"]) {
            if (!s.is_object() || !s.contains("rle") || !s.contains("score") || !s["score"].is_number())
                throw ProtocolError("segment needs rle and numeric score");
            BinaryMask mask;
            try {
                mask = io::detail::parse_segmentation(s["rle"], image.height, image.width, "rle");
            } catch (const ParseError& e) {
                throw ProtocolError(std::string("bad segment mask: ") + e.what());
            }
            out.push_back({std::move(mask), s["score"].get<double>(), static_cast<std::size_t>(idx)});
        }
    }
    validate_reply(out, image, prompts, masks_per_prompt);
    return out;
}

inline AttentionStack parse_attention_reply(const json& reply, const ImageRef& image) {
    raise_if_error(reply);
    check_image_id(reply, image);
    const auto mit = reply.find("maps");
    if (mit == reply.end() || !mit->is_array() || mit->empty()) throw ProtocolError("reply lacks a non-empty maps array");
    AttentionStack stack;
    for (const auto& m : *mit) {
        if (!m.is_string()) throw ProtocolError("attention map must be a base64 string");
        RealGrid map;
        try {
            map = io::decode_prior_map(io::base64::decode(m.get<std::string>()), "attention map");
        } catch (const ParseError& e) {
            throw ProtocolError(e.what());
        }
        if (map.height() != image.height || map.width() != image.width)
            throw ProtocolError("attention map size does not match image");
        stack.head_maps.push_back(std::move(map));
    }
    return stack;
}

}  // namespace wire

/// One request line in, one reply line out.
class Channel {
public:
    virtual ~Channel() = default;
    virtual std::string exchange(const std::string& line) = 0;
    /// Drops the connection so the next exchange reconnects.
    virtual void reset() {}
};

namespace detail {

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() { close(); }
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    void close() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

inline void write_all(int fd, const std::string& data, bool socket) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = socket ? ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                                 : ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("write failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

/// Reads until '\n'; bytes after the newline stay in `buffer`.
inline std::string read_line(int fd, std::string& buffer, int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        if (const auto nl = buffer.find('\n'); nl != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw TransportError("timed out waiting for bridge reply");
        pollfd pfd{fd, POLLIN, 0};
        const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (pr < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (pr == 0) continue;
        char chunk[65536];
        const ssize_t n = ::read(fd, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw TransportError(std::string("read failed: ") + std::strerror(errno));
        }
        if (n == 0) throw TransportError("bridge closed the connection");
        buffer.append(chunk, static_cast<std::size_t>(n));
    }
}

}  // namespace detail

/// Unix-domain stream socket.
class UnixSocketChannel : public Channel {
public:
    explicit UnixSocketChannel(std::string path, int timeout_ms = 60000)
        : path_(std::move(path)), timeout_ms_(timeout_ms) {}

    std::string exchange(const std::string& line) override {
        if (!fd_) connect();
        detail::write_all(fd_.get(), line + "\n", true);
        return detail::read_line(fd_.get(), buffer_, timeout_ms_);
    }
    void reset() override {
        fd_.close();
        buffer_.clear();
    }

private:
    void connect() {
        detail::Fd fd(::socket(AF_UNIX, SOCK_STREAM, 0));
        if (!fd) throw TransportError(std::string("socket: ") + std::strerror(errno));
        sockaddr_un addr{};
        addr.sun_family = AF_UNIX;
        if (path_.size() >= sizeof addr.sun_path) throw TransportError("socket path too long");
        std::memcpy(addr.sun_path, path_.c_str(), path_.size() + 1);
        if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw TransportError("connect " + path_ + ": " + std::strerror(errno));
        fd_ = std::move(fd);
    }

    std::string path_;
    int timeout_ms_;
    detail::Fd fd_;
    std::string buffer_;
};

/// Child process spoken to over its stdin/stdout; started with /bin/sh -c.
class ProcessChannel : public Channel {
public:
    explicit ProcessChannel(std::string command, int timeout_ms = 60000)
        : command_(std::move(command)), timeout_ms_(timeout_ms) {
        ::signal(SIGPIPE, SIG_IGN);
    }
    ~ProcessChannel() override { stop(); }
    ProcessChannel(const ProcessChannel&) = delete;
    ProcessChannel& operator=(const ProcessChannel&) = delete;

    std::string exchange(const std::string& line) override {
        if (pid_ <= 0) start();
        detail::write_all(to_child_.get(), line + "\n", false);
        return detail::read_line(from_child_.get(), buffer_, timeout_ms_);
    }
    void reset() override { stop(); }

private:
    void start() {
        int in[2];
        int out[2];
        if (::pipe2(in, O_CLOEXEC) != 0) throw TransportError("pipe failed");
        if (::pipe2(out, O_CLOEXEC) != 0) {
            ::close(in[0]);
            ::close(in[1]);
            throw TransportError("pipe failed");
        }
        const pid_t pid = ::fork();
        if (pid < 0) throw TransportError("fork failed");
        if (pid == 0) {
            ::dup2(in[0], STDIN_FILENO);
            ::dup2(out[1], STDOUT_FILENO);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(in[0]);
        ::close(out[1]);
        to_child_ = detail::Fd(in[1]);
        from_child_ = detail::Fd(out[0]);
        pid_ = pid;
        buffer_.clear();
    }
    void stop() {
        to_child_.close();
        from_child_.close();
        if (pid_ > 0) {
            int status = 0;
            if (::waitpid(pid_, &status, WNOHANG) == 0) {
                ::kill(pid_, SIGTERM);
                ::waitpid(pid_, &status, 0);
            }
        }
        pid_ = -1;
    }

    std::string command_;
    int timeout_ms_;
    pid_t pid_ = -1;
    detail::Fd to_child_;
    detail::Fd from_child_;
    std::string buffer_;
};

/// Answers from a recorded session file: one {"request":...,"response":...} object per line.
/// Requests are matched by canonical JSON text, so call order does not matter.
class ReplayChannel : public Channel {
public:
    explicit ReplayChannel(const std::filesystem::path& path) : name_(path.string()) {
        std::ifstream in(path);
        if (!in) throw TransportError("cannot open replay file " + name_);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            nlohmann::json entry;
            try {
                entry = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(name_ + ":" + std::to_string(n) + ": " + e.what());
            }
            if (!entry.is_object() || !entry.contains("request") || !entry.contains("response"))
                throw ParseError(name_ + ":" + std::to_string(n) + ": entry needs request and response");
            replies_.emplace(entry["request"].dump(), entry["response"].dump());
        }
    }

    std::string exchange(const std::string& line) override {
        const auto key = wire::parse_line(line).dump();
        const auto it = replies_.find(key);
        if (it == replies_.end()) throw ProtocolError("replay_miss", "no recorded exchange for request in " + name_);
        return it->second;
    }

    std::size_t size() const noexcept { return replies_.size(); }

private:
    std::string name_;
    std::map<std::string, std::string> replies_;
};

/// Tees every exchange of an inner channel to a replay file.
class RecordingChannel : public Channel {
public:
    RecordingChannel(std::unique_ptr<Channel> inner, const std::filesystem::path& path)
        : inner_(std::move(inner)), out_(path, std::ios::app) {
        if (!out_) throw TransportError("cannot open recording file " + path.string());
    }

    std::string exchange(const std::string& line) override {
        std::string reply = inner_->exchange(line);
        nlohmann::json entry{{"request", wire::parse_line(line)}, {"response", wire::parse_line(reply)}};
        out_ << entry.dump() << '\n';
        out_.flush();
        return reply;
    }
    void reset() override { inner_->reset(); }

private:
    std::unique_ptr<Channel> inner_;
    std::ofstream out_;
};

struct RetryPolicy {
    int retries = 3;
    int backoff_ms = 100;
};

/// Backend that speaks the wire protocol over a Channel. Single-flight.
class BridgeBackend : public SegmenterBackend {
public:
    BridgeBackend(std::unique_ptr<Channel> channel, RetryPolicy retry = {}, int masks_per_prompt = 3)
        : channel_(std::move(channel)), retry_(retry), m_(masks_per_prompt) {}

    BackendCapabilities capabilities() const override { return {m_, false, true}; }

    std::vector<ScoredSegment> segment(const ImageRef& image, const PromptSet& prompts) override {
        check_prompts_in_bounds(image, prompts);
        if (prompts.empty()) return {};
        const auto reply = call(wire::segment_request(image, prompts, m_));
        return wire::parse_segment_reply(reply, image, prompts, m_);
    }

    AttentionStack attention(const ImageRef& image) override {
        return wire::parse_attention_reply(call(wire::attention_request(image)), image);
    }

private:
    nlohmann::json call(const nlohmann::json& request) {
        std::lock_guard lock(mu_);
        const std::string line = request.dump();
        for (int attempt = 0;; ++attempt) {
            try {
                return wire::parse_line(channel_->exchange(line));
            } catch (const TransportError&) {
                channel_->reset();
                if (attempt >= retry_.retries) throw;
                std::this_thread::sleep_for(std::chrono::milliseconds(retry_.backoff_ms << attempt));
            }
        }
    }

    std::unique_ptr<Channel> channel_;
    RetryPolicy retry_;
    int m_;
    std::mutex mu_;
};

/// Parses "unix:<path>" or "exec:<command>".
inline std::unique_ptr<Channel> open_endpoint(const std::string& locator, int timeout_ms = 60000) {
    if (locator.rfind("unix:", 0) == 0) return std::make_unique<UnixSocketChannel>(locator.substr(5), timeout_ms);
    if (locator.rfind("exec:", 0) == 0) return std::make_unique<ProcessChannel>(locator.substr(5), timeout_ms);
    throw ConfigError("bridge endpoint must start with unix: or exec: (got \"" + locator + "\")");
}

}  // namespace sos
