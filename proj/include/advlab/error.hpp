#pragma once

#include <stdexcept>
#include <string>

namespace advlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file: bad magic, version mismatch, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Values outside their declared domain, e.g. pixels outside [0, 255].
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace advlab
