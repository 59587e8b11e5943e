#pragma once

#include <stdexcept>
#include <string>

namespace socest {

// Base class for every error raised by the toolkit. Callers that only need a
// diagnostic line can catch this one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (e.g. SoC > 1).
class DomainError : public Error {
public:
    using Error::Error;
};

// Data that violates a type invariant (non-positive resistance, bad table).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input text; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    explicit ParseError(const std::string& what) : Error(what) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

class FitError : public Error {
public:
    using Error::Error;
};

// Covariance corruption inside a filter step (innovation variance <= 0).
class NumericalFault : public Error {
public:
    using Error::Error;
};

}  // namespace socest
