#pragma once

#include <stdexcept>
#include <string>

namespace quadmed {

// Exit-code categories used by the CLI: usage=1, data=2, numeric=3.
enum class ErrorKind { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

// Malformed input file content. Carries file name and 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& msg)
        : Error(ErrorKind::data, file + ":" + std::to_string(line) + ": " + msg),
          file_(file), line_(line) {}
    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

// Well-formed input that violates a cross-record constraint (dangling edge,
// duplicate id, conflicting mapping, ...).
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

// Lookup of an id or code that is not present.
class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

// A generator was asked for more material than its inputs can provide.
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

// Bad configuration or command-line usage.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::usage, msg) {}
};

// Non-finite loss, diverging optimization, or similar numeric failure.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};

}  // namespace quadmed
