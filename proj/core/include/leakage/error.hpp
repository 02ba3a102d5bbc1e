#pragma once

#include <stdexcept>
#include <string>

namespace leakage {

/// Process exit codes used by the CLI. Every library error maps onto one.
enum class ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kConfig = 2,
  kData = 3,
  kDegenerate = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual ExitCode exit_code() const noexcept { return ExitCode::kData; }
};

/// Invalid configuration: bad ratios, non positive-definite covariance, bad flags.
class ConfigError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

/// Mismatched shapes between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Fewer samples than the estimator needs (N <= k, empty partition cell, ...).
class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

/// A field required by the requested computation is absent (embeddings, CIs, ...).
class MissingFieldError : public Error {
 public:
  using Error::Error;
};

/// Sample ids in two inputs do not line up.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of a function (digamma(x <= 0), label out of range).
class DomainError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kDegenerate; }
};

/// A variable with a single observed value where an entropy denominator is needed.
class DegenerateVariableError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kDegenerate; }
};

}  // namespace leakage
