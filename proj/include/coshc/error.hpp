#pragma once

#include <stdexcept>
#include <string>

namespace coshc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failures: missing files, short writes, unwritable paths.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data: bad magic, version mismatch, truncation, NaNs.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Operands whose dimensions or counts disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied an argument outside the documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was observed broken.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace coshc
