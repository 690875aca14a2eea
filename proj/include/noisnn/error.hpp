#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noisnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not conform for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation's precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid or infeasible configuration (alpha < 2, epochs < 1, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Architecture string that does not match the layer grammar.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Unreadable or malformed input file (bad magic, truncated data).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File shorter than its header declares.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Non-finite values during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace noisnn
