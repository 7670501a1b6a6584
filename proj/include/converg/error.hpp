#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace converg {

// Base of every error the library raises. Callers that only care about the
// user-error / corruption split (the CLI exit codes) can test `is_corruption`.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual bool is_corruption() const noexcept { return false; }
};

// Malformed input text (N-Quads, N-Triples, query). Positions are 1-based.
class ParseError : public Error {
public:
    ParseError(std::string message, std::size_t line, std::size_t column)
        : Error(format(message, line, column)), message_(std::move(message)), line_(line), column_(column) {}

    const std::string& message() const noexcept { return message_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& m, std::size_t line, std::size_t column) {
        return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + m;
    }

    std::string message_;
    std::size_t line_;
    std::size_t column_;
};

// Query is well-formed text but violates scoping or aggregate rules.
class QueryError : public Error {
public:
    using Error::Error;
};

// Runtime failure while evaluating a query (e.g. SUM over a non-numeric term).
class EvaluationError : public Error {
public:
    using Error::Error;
};

// Unknown identifier (term id, vng IRI).
class LookupError : public Error {
public:
    using Error::Error;
};

// Snapshot failed validation, or the store is internally inconsistent.
class CorruptionError : public Error {
public:
    using Error::Error;
    bool is_corruption() const noexcept override { return true; }
};

class IoError : public Error {
public:
    using Error::Error;
    bool is_corruption() const noexcept override { return true; }
};

}  // namespace converg
