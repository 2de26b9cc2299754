#pragma once

#include <stdexcept>
#include <string>

namespace ladder {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operand shapes do not satisfy an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input values outside an operation's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API contract violation (misuse detected at runtime).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File format version not supported by this build.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Metric requested on input where it is mathematically undefined.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ladder
