#pragma once

#include <stdexcept>
#include <string>

namespace tct {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Inconsistent or physically impossible scan geometry.
class GeometryError : public Error {
  public:
    using Error::Error;
};

/// Malformed exchange file, dimension mismatch or checksum failure.
class FormatError : public Error {
  public:
    using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A numerical procedure gave up (divergence, retry budget, memory guard).
class NumericalError : public Error {
  public:
    using Error::Error;
};

/// No candidate sampling passed the uniqueness certificate.
class InfeasibleError : public Error {
  public:
    InfeasibleError(const std::string &what, std::string diagnostic)
        : Error(what), diagnostic_(std::move(diagnostic)) {}
    const std::string &diagnostic() const noexcept { return diagnostic_; }

  private:
    std::string diagnostic_;
};

} // namespace tct
