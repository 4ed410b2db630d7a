#include "lipscde/control_path.hpp"

#include <algorithm>

#include "lipscde/errors.hpp"

namespace lipscde {

ControlPath::ControlPath(std::vector<double> knots, Tensor values)
    : knots_(std::move(knots)), values_(std::move(values)) {}

std::size_t ControlPath::segment(double t) const {
  if (t < knots_.front() || t > knots_.back())
    throw ContractViolation("ControlPath: t outside [t_0, t_m]");
  // index i with knots[i] <= t < knots[i+1]; final knot maps to last segment
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  std::size_t i = std::size_t(it - knots_.begin());
  if (i == 0) return 0;
  if (i >= knots_.size()) return knots_.size() - 2;
  return i - 1;
}

Tensor ControlPath::at(double t) const {
  std::size_t i = segment(t);
  double t0 = knots_[i], t1 = knots_[i + 1];
  double a = (t - t0) / (t1 - t0);
  Tensor out(channels());
  for (std::size_t c = 0; c < channels(); ++c)
    out[c] = (1.0 - a) * values_(i, c) + a * values_(i + 1, c);
  return out;
}

Tensor ControlPath::derivative(double t) const {
  std::size_t i = segment(t);
  double dt = knots_[i + 1] - knots_[i];
  Tensor out(channels());
  for (std::size_t c = 0; c < channels(); ++c)
    out[c] = (values_(i + 1, c) - values_(i, c)) / dt;
  return out;
}

Tensor ControlPath::increment(double t0, double t1) const {
  Tensor a = at(t0), b = at(t1);
  for (std::size_t c = 0; c < a.size(); ++c) b[c] -= a[c];
  return b;
}

ControlPath build_control_path(std::span<const double> timestamps, const Tensor& values) {
  if (timestamps.size() < 2)
    throw ContractViolation("build_control_path: need at least 2 observations");
  if (values.rank() != 2 || values.rows() != timestamps.size())
    throw ContractViolation("build_control_path: values must be [m+1 x c]");
  for (std::size_t i = 0; i + 1 < timestamps.size(); ++i)
    if (!(timestamps[i] < timestamps[i + 1]))
      throw ContractViolation("build_control_path: timestamps must be strictly increasing");
  return ControlPath(std::vector<double>(timestamps.begin(), timestamps.end()), values);
}

}  // namespace lipscde
