#pragma once

#include <stdexcept>
#include <string>

namespace isdml {

// Bad shapes, out-of-range labels, non-finite values, invalid configuration.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A numerical routine could not produce a valid result (e.g. Cholesky failure).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or truncated files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace isdml
