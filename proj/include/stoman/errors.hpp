#pragma once

#include <stdexcept>
#include <string>

namespace stoman {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid grid, dimension mismatch, malformed configuration.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A time that should lie on a sampling grid does not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A sampled path or process does not cover the requested window.
class InsufficientPathError : public Error {
 public:
  using Error::Error;
};

class InvalidModelError : public Error {
 public:
  using Error::Error;
};

/// Backward propagation was requested on the stable part of the semigroup.
class DichotomyViolation : public Error {
 public:
  using Error::Error;
};

/// The spectral-gap inequality required by a solver does not hold. The
/// message names the failing inequality.
class GapViolation : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data violates a precondition (e.g. a base point with a
/// stray component in the complementary subspace).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A fixed-point iteration hit its iteration cap.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, double measured_ratio, int iterations)
      : Error(what), measured_ratio_(measured_ratio), iterations_(iterations) {}

  double measured_ratio() const noexcept { return measured_ratio_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double measured_ratio_;
  int iterations_;
};

}  // namespace stoman
