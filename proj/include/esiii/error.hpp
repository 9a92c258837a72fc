#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace esiii {

// Root of every domain error. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Image does not match the model's input resolution.
class ResolutionError : public DimensionError {
 public:
  ResolutionError(std::size_t expected, std::size_t actual_w, std::size_t actual_h)
      : DimensionError("resolution mismatch: expected " + std::to_string(expected) + "x" +
                       std::to_string(expected) + ", got " + std::to_string(actual_w) + "x" +
                       std::to_string(actual_h)) {}
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class BadVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (non-finite loss at step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class AttackError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Misuse of an API contract (e.g. pass-judging a harmful case).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace esiii
