#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace elastic {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed something outside an operation's domain (dimension
/// mismatch, probability outside (0,1), negative degrees of freedom, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An operation's structural precondition does not hold for the data,
/// e.g. an estimator that needs both strata receives an empty one.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// An iterative method stopped without meeting its tolerance. Carries the
/// last iterate so callers can report partial diagnostics.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, Eigen::VectorXd last_iterate = {})
      : Error(what), last_iterate_(std::move(last_iterate)) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

/// An information, Jacobian or covariance matrix could not be factorized.
class SingularInformation : public Error {
 public:
  using Error::Error;
};

/// The truncation region of a truncated normal has (estimated) mass below
/// the rejection sampler's floor.
class InfeasibleTruncation : public Error {
 public:
  using Error::Error;
};

/// Method refused for the requested estimator (bootstrap of the elastic
/// estimator).
class UnsupportedMethod : public Error {
 public:
  using Error::Error;
};

/// A closed form has a vanishing denominator or a reference quantity is
/// zero.
class DegenerateCase : public Error {
 public:
  using Error::Error;
};

}  // namespace elastic
