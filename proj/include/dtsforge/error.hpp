#pragma once

#include <stdexcept>
#include <string>

namespace dtsforge {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be read or written, or its contents are malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace dtsforge
