#pragma once

#include <stdexcept>
#include <string>

namespace enopt {

/// Shapes of the operands do not agree, or a matrix is empty.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Too few ensemble members for the requested statistic.
class InsufficientSampleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Covariance could not be factorized (not positive semi-definite).
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An estimator was handed inputs that violate its contract, e.g. M != N
/// for a paired estimator or a missing analytic gradient.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A perturbation direction collapsed to zero (v_m == w_m).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace enopt
