#pragma once

#include <stdexcept>
#include <string>

namespace gradhom {

// Base class for every error raised by the library. Commands map
// ConfigError to exit status 2 and everything else to 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class MaterialError : public Error {
    using Error::Error;
};

class ResolutionError : public Error {
    using Error::Error;
};

class MeshFormatError : public Error {
    using Error::Error;
};

class PairingError : public Error {
    using Error::Error;
};

class InvertedElementError : public Error {
public:
    InvertedElementError(const std::string& what, long element = -1) : Error(what), element_(element) {}
    long element() const { return element_; }

private:
    long element_;
};

class ConstraintError : public Error {
    using Error::Error;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual, long iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}
    double residual() const { return residual_; }
    long iterations() const { return iterations_; }

private:
    double residual_;
    long iterations_;
};

// Raised when the source of the second-order cell problem has non-zero mean,
// i.e. the classical tensor passed in does not belong to the first-order fields.
class ConsistencyError : public Error {
    using Error::Error;
};

class PackingError : public Error {
    using Error::Error;
};

} // namespace gradhom
