#pragma once

#include <stdexcept>
#include <string>

namespace corrpost {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

/// Base of every error thrown by the library. Carries the exit code the CLI
/// reports and lets callers prepend context (e.g. the pipeline stage name).
class Error : public std::exception {
 public:
  Error(ExitCode code, std::string message) : code_(code), message_(std::move(message)) {}

  const char* what() const noexcept override { return message_.c_str(); }
  ExitCode code() const noexcept { return code_; }

  void prepend(const std::string& context) { message_ = context + ": " + message_; }

 private:
  ExitCode code_;
  std::string message_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::string m) : Error(ExitCode::kConfig, std::move(m)) {}
};

/// Invalid synthesis or optimizer parameters.
class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DataError : public Error {
 public:
  explicit DataError(std::string m) : Error(ExitCode::kData, std::move(m)) {}
};

class SizeError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class InputError : public DataError {
 public:
  using DataError::DataError;
};

class GeometryError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  explicit NumericError(std::string m) : Error(ExitCode::kNumeric, std::move(m)) {}
};

/// A synthesis or normalization step whose system has no usable solution
/// (zero denominators, rank-deficient Gram matrix, single-sample batch stats).
class DegenerateError : public NumericError {
 public:
  using NumericError::NumericError;
};

class UndefinedMetricError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(std::string m, int epoch = -1) : NumericError(std::move(m)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Calls made in the wrong order (backward without forward, uninitialized
/// running statistics).
class StateError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace corrpost
