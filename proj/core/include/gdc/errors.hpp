#pragma once

#include <stdexcept>
#include <string>

namespace gdc {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor/map shapes. Messages name both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad argument values (negative sizes, out-of-range ratios, malformed configs).
class ValueError : public Error {
public:
    using Error::Error;
};

// File system and codec failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite values are required (NaN loss, etc).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace gdc
