#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wardrop {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number of the offending row.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Structurally invalid model data (bad capacity, dangling node, shape mismatch).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operation not defined for the given latency family or topology.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// An OD pair has no directed path.
class UnreachableError : public Error {
 public:
  using Error::Error;
};

/// The strict-complementarity hypothesis of the sensitivity result fails.
class IftHypothesisError : public Error {
 public:
  using Error::Error;
};

/// A linear system in the sensitivity machinery is singular or ill-conditioned.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, double condition_estimate)
      : Error(what), condition_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_; }

 private:
  double condition_;
};

/// An equilibrium solve needed to converge and did not.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The sampled gradient estimator lost too many probes.
class EstimatorError : public Error {
 public:
  using Error::Error;
};

}  // namespace wardrop
