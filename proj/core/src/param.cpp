#include "lipscde/param.hpp"

#include "lipscde/lipschitz.hpp"
#include "lipschitz_detail.hpp"

namespace lipscde {

Param& ParamStore::add(std::string name, Tensor init, Projection proj, double bound) {
  params_.emplace_back();
  Param& p = params_.back();
  p.name = std::move(name);
  p.grad = init.zeros_like();
  p.value = std::move(init);
  p.projection = proj;
  p.lipschitz_bound = bound;
  return p;
}

void ParamStore::zero_grad() {
  for (Param& p : params_) p.grad.fill(0.0);
}

void ParamStore::apply_projections() {
  for (Param& p : params_) {
    switch (p.projection) {
      case Projection::kNone:
        break;
      case Projection::kSpectral:
        detail::project_matrix_inplace(p.value, p.lipschitz_bound, &p.pi_warm);
        break;
      case Projection::kConvInduced:
        project_conv_kernel(p.value, p.lipschitz_bound, std::size_t(p.proj_len),
                            &p.pi_warm);
        break;
    }
  }
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

}  // namespace lipscde
