#pragma once

#include <stdexcept>
#include <string>

namespace debias {

// Problems the caller can fix: bad flags, malformed input files, shape
// mismatches. The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file contents; message carries a location when one is known.
class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& what) : ValidationError(what) {}
};

// Tensor or dataset dimension mismatch; message names both dimensions.
class ShapeError : public ValidationError {
public:
    explicit ShapeError(const std::string& what) : ValidationError(what) {}
};

// Non-finite values or violated numeric invariants. The CLI maps these
// (and I/O failures) to exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace debias
