#include "lipscde/adam.hpp"

#include <cmath>

namespace lipscde {

Adam::Adam(ParamStore& store, Config cfg) : store_(store), cfg_(cfg) {
  m_.reserve(store.size());
  v_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    m_.push_back(store[i].value.zeros_like());
    v_.push_back(store[i].value.zeros_like());
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t i = 0; i < store_.size(); ++i) {
    Param& p = store_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      double g = p.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  store_.apply_projections();
}

}  // namespace lipscde
