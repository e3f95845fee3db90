#pragma once

#include <stdexcept>
#include <string>

namespace redsr {

// Error taxonomy shared by every module. The CLI maps these onto exit codes:
// IoError -> 2, ConfigError -> 3, FormatError -> 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

/// Raised when a NaN or Inf is produced or consumed by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace redsr
