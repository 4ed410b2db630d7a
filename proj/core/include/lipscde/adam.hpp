#pragma once

#include <vector>

#include "lipscde/param.hpp"

namespace lipscde {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. After each step the caller's ParamStore
/// projections are re-applied so every Lipschitz bound holds between steps.
class Adam {
 public:
  using Config = AdamConfig;

  explicit Adam(ParamStore& store, AdamConfig cfg = AdamConfig());

  /// One update from the gradients currently held in the store. Projections
  /// are applied afterwards; gradients are left untouched (caller zeroes).
  void step();

  int64_t steps_taken() const { return t_; }

 private:
  ParamStore& store_;
  Config cfg_;
  int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace lipscde
