#pragma once

#include <deque>
#include <string>

#include "lipscde/tensor.hpp"

namespace lipscde {

/// How a parameter is constrained after each optimizer step.
enum class Projection {
  kNone,
  kSpectral,     // 2-D matrix, spectral norm <= bound
  kConvInduced,  // conv kernel [out][in][tap], induced operator norm <= bound
};

/// Trainable parameter. Gradients accumulate across backward() calls until
/// zeroed. `pi_warm` carries the power-iteration vector between projections.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Projection projection = Projection::kNone;
  double lipschitz_bound = 1.0;
  int proj_len = 32;  // canonical signal length for kConvInduced
  Tensor pi_warm;

  bool constrained() const { return projection != Projection::kNone; }
};

/// Owns all parameters of a model. Addresses are stable once added.
class ParamStore {
 public:
  Param& add(std::string name, Tensor init,
             Projection proj = Projection::kNone, double bound = 1.0);

  void zero_grad();

  /// Re-projects every constrained parameter; called after each optimizer
  /// step and once at construction so training always starts feasible.
  void apply_projections();

  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }

  std::size_t total_values() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Param> params_;
};

}  // namespace lipscde
