#pragma once

#include <stdexcept>
#include <string>

namespace exgc {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad configuration, bad flags, out-of-range parameters.
/// The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape disagreement between tensors or between metadata and data.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Failure reading or writing an on-disk artifact. The message names the
/// file and, where it applies, the 1-based line.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace exgc
