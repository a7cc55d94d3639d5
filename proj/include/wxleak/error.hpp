#pragma once

#include <stdexcept>
#include <string>

namespace wxleak {

/// Violated type invariant or precondition. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent configuration file. Maps to CLI exit code 1.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Failure while running a computation on valid inputs. Maps to CLI exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wxleak
