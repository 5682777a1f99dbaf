#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowedge {

// Failure categories map onto CLI exit codes.
enum class ErrorCode : int {
    config = 2,
    data = 3,
    numeric = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorCode::data, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : DataError(what + " (at byte " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}
    std::size_t offset() const { return offset_; }
    const std::string& message() const { return message_; }

private:
    std::string message_;
    std::size_t offset_;
};

}  // namespace flowedge
