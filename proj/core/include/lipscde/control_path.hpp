#pragma once

#include <span>
#include <vector>

#include "lipscde/tensor.hpp"

namespace lipscde {

/// Piecewise-linear interpolation of an observed multichannel trajectory.
/// This is the continuous driver dH of the controlled differential equation:
/// evaluable at any t in [t_0, t_m], derivative piecewise constant.
class ControlPath {
 public:
  ControlPath() = default;
  ControlPath(std::vector<double> knots, Tensor values);

  std::size_t channels() const { return values_.cols(); }
  std::size_t knot_count() const { return knots_.size(); }
  const std::vector<double>& knots() const { return knots_; }
  const Tensor& knot_values() const { return values_; }
  double t_begin() const { return knots_.front(); }
  double t_end() const { return knots_.back(); }

  /// Value at time t (t clamped to the domain is a contract violation, not
  /// a silent extrapolation).
  Tensor at(double t) const;

  /// Right-continuous derivative: the slope of the active segment. At the
  /// final knot the last segment's slope is used.
  Tensor derivative(double t) const;

  /// H(t1) - H(t0), computed from the interpolant.
  Tensor increment(double t0, double t1) const;

 private:
  std::size_t segment(double t) const;

  std::vector<double> knots_;
  Tensor values_;  // [m+1 x c]
};

/// Validates (>= 2 observations, strictly increasing timestamps) and builds
/// the interpolant.
ControlPath build_control_path(std::span<const double> timestamps, const Tensor& values);

}  // namespace lipscde
