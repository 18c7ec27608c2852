#pragma once

#include <stdexcept>
#include <string>

namespace fedlora {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or rank preconditions violated.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Iterative algorithm failed to converge within its cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& msg, int iterations)
        : Error(msg), iterations_(iterations) {}

    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

// A federation participant broke the agreed protocol (e.g. trained a frozen matrix).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Bad user-supplied configuration (CLI flags or config file).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Filesystem failures, annotated with the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace fedlora
