#pragma once

#include <stdexcept>
#include <string>

namespace cobsplat {

// Invalid user input: malformed files, mismatched dimensions, bad config.
// The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed on-disk data. Messages name the byte offset or element index.
class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& what) : ValidationError(what) {}
};

// API misuse: a precondition the caller controls was violated.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

} // namespace cobsplat
