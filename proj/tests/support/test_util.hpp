#pragma once

#include <functional>

#include "lipscde/param.hpp"
#include "lipscde/rng.hpp"
#include "lipscde/tensor.hpp"

namespace lipscde::testing {

inline Tensor random_vector(std::size_t n, uint64_t seed, double scale = 1.0) {
  Tensor t(n);
  for (std::size_t i = 0; i < n; ++i)
    t[i] = scale * rng_normal(seed, Stream::kTest, i);
  return t;
}

inline Tensor random_matrix(std::size_t r, std::size_t c, uint64_t seed,
                            double scale = 1.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = scale * rng_normal(seed, Stream::kTest, i);
  return t;
}

inline Tensor random_kernel(std::size_t co, std::size_t ci, std::size_t k,
                            uint64_t seed, double scale = 1.0) {
  Tensor t(co, ci, k);
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = scale * rng_normal(seed, Stream::kTest, i);
  return t;
}

/// Central finite differences against the analytic gradients currently held
/// in the store. `eval` must recompute the scalar objective from the current
/// parameter values. Returns the max relative error over all components.
inline double max_grad_rel_error(ParamStore& store,
                                 const std::function<double()>& eval,
                                 double h = 1e-5, double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t pi = 0; pi < store.size(); ++pi) {
    Param& p = store[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double saved = p.value[i];
      p.value[i] = saved + h;
      double up = eval();
      p.value[i] = saved - h;
      double dn = eval();
      p.value[i] = saved;
      double fd = (up - dn) / (2.0 * h);
      double g = p.grad[i];
      double denom = std::max({floor, std::abs(fd), std::abs(g)});
      worst = std::max(worst, std::abs(fd - g) / denom);
    }
  }
  return worst;
}

}  // namespace lipscde::testing
