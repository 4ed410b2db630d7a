#pragma once

#include <stdexcept>
#include <string>

namespace lipscde {

/// Thrown when a caller violates a documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Thrown when a computation produces NaN/Inf or otherwise fails numerically.
/// Carries the name of the offending operation and, where meaningful, a step
/// index (e.g. the solver step that went non-finite; -1 if not applicable).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& op, long step = -1)
      : std::runtime_error(step >= 0
                               ? "numerical failure in '" + op + "' at step " +
                                     std::to_string(step)
                               : "numerical failure in '" + op + "'"),
        op_(op),
        step_(step) {}

  const std::string& op() const { return op_; }
  long step() const { return step_; }

 private:
  std::string op_;
  long step_;
};

}  // namespace lipscde
