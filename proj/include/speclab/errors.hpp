#pragma once

#include <stdexcept>
#include <string>

namespace speclab {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A mathematical invariant failed at run time (CLI exit code 3).
class InvariantViolation : public Error {
public:
    using Error::Error;
};

// A numerical routine did not converge or broke down.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Filesystem failures (CLI exit code 4).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace speclab
