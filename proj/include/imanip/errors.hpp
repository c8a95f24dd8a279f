#pragma once

#include <stdexcept>
#include <string>

namespace imanip {

// Shape disagreement between operands or against a model/world config.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Class label or element index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class RegistryError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or corrupted on-disk artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A training run did not meet its learnability gate.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace imanip
