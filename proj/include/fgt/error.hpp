#pragma once

#include <stdexcept>
#include <string>

namespace fgt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together. The message names the axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Corrupt, truncated or version-mismatched checkpoint files.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (CSV rows, manifests, images).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad user configuration: unknown keys, invalid values, contradictory plans.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fgt
