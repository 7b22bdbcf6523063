#pragma once

#include <stdexcept>
#include <string>

namespace sos {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operands disagree on height/width, or a grid has a zero extent.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A prior map has no mass left after min-subtraction (constant map).
class DegeneratePriorError : public Error {
public:
    using Error::Error;
};

/// Caller violated an operation's precondition (bad argument values).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (files, JSON documents).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Invalid pipeline configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The segmenter backend could not be reached or dropped the connection.
class TransportError : public Error {
public:
    using Error::Error;
};

/// The segmenter backend answered with something that violates the wire protocol,
/// or with an explicit error envelope.
class ProtocolError : public Error {
public:
    ProtocolError(std::string code, const std::string& message)
        : Error(code.empty() ? message : code + ": " + message), code_(std::move(code)) {}
    explicit ProtocolError(const std::string& message) : ProtocolError("protocol", message) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace sos
