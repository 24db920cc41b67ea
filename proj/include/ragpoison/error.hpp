#pragma once

#include <stdexcept>
#include <string>

namespace ragpoison {

/// Precondition or input-validation failure (bad arguments, malformed files).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while doing work: I/O, external backend, generator errors.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation is undefined at the given input (e.g. the gradient
/// of a normalized embedding at the all-zero image).
class DegenerateInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace ragpoison
