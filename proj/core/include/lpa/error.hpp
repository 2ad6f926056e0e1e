#pragma once

#include <stdexcept>
#include <string>

namespace lpa {

// Error hierarchy. The CLI maps ConfigError to exit code 2 and
// SolverError / NumericError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ResolutionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class CapacityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ValidationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lpa
