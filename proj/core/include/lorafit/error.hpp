#pragma once

#include <stdexcept>
#include <string>

namespace lorafit {

/// Base of every error raised by the library. The CLI maps each subclass
/// onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes disagree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An input value is outside its declared domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A malformed input record; the message carries the line number.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Low-rank factor rank is not in [1, min(d, k)).
class RankError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An object was used in a state that does not permit the call
/// (merging twice, updating a frozen parameter, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff API, e.g. calling backward on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad or unknown configuration keys/values.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace lorafit
