#pragma once

#include "lipscde/tensor.hpp"

namespace lipscde::detail {

/// In-place spectral projection with an optional warm-start vector.
void project_matrix_inplace(Tensor& m, double bound, Tensor* warm);

}  // namespace lipscde::detail
