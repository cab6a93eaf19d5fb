#pragma once

#include <stdexcept>
#include <string>

namespace fbagg {

/// Bad index, malformed distribution or inconsistent dimensions.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model violates a structural requirement (e.g. no controls).
class InvalidModel : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Observation has zero probability under the current belief.
class ImpossibleObservation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Policy returned a control outside the model's control set.
class InvalidPolicy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid enumeration would overflow or exceed the configured budget.
class GridOverflow : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Reference oracle cannot be built for this model size.
class InfeasibleOracle : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fbagg
