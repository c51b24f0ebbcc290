#pragma once

#include <stdexcept>
#include <string>

namespace tagfog {

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or layer widths.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An argument outside the mathematical domain of an operation (empty set, bad label, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (non-scalar backward, B=1 batch norm, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing or wrong-version files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or failed numerical checks.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tagfog
