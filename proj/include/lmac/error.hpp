#pragma once

#include <stdexcept>
#include <string>

namespace lmac {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or geometry do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf was produced, or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A file on disk does not conform to its expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An artifact a command depends on is absent.
class MissingPrerequisite : public Error {
 public:
  using Error::Error;
};

}  // namespace lmac
