#pragma once

#include <stdexcept>
#include <string>

namespace igds {

/// Shape mismatches, invalid arguments, empty inputs and malformed files.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Values outside the domain of a numeric operation (negative log argument,
/// vanishing noise level, non-finite input).
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training aborted because the loss diverged.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace igds
