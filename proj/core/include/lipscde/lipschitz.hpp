#pragma once

#include "lipscde/param.hpp"
#include "lipscde/tensor.hpp"

namespace lipscde {

/// Largest singular value of a 2-D matrix, estimated by power iteration on
/// M^T M. Runs at least `min_iters` steps (contract: >= 50), then continues
/// until the Rayleigh estimate is stationary so the bound is tight enough
/// for hard-constraint projection. `warm` optionally carries the iteration
/// vector across calls.
double spectral_norm(const Tensor& m, int min_iters = 50, Tensor* warm = nullptr);

/// m * min(1, bound / sigma_max(m)). A zero matrix is returned unchanged.
/// The result's spectral norm is <= bound * (1 + 1e-9) by a verify-and-
/// rescale pass.
Tensor spectral_norm_project(const Tensor& m, double bound);

/// Cross-correlation along the time axis with zero 'same' padding:
/// out[t][o] = sum_{q,c} kernel[o][c][q] * signal[t + q - (k-1)/2][c].
Tensor conv1d_same(const Tensor& signal, const Tensor& kernel);

/// Adjoint of conv1d_same in its input argument (kernel fixed).
Tensor conv1d_same_adjoint(const Tensor& out_grad, const Tensor& kernel);

/// Operator norm of the convolution induced by `kernel` on length-T signals
/// (the spectral norm of its induced block-Toeplitz matrix), computed
/// matrix-free by power iteration. Non-decreasing in T, so a bound certified
/// at T covers every shorter signal.
double conv_operator_norm(const Tensor& kernel, std::size_t T, int min_iters = 50,
                          Tensor* warm = nullptr);

/// Exact operator norm of the circular convolution on length-M signals:
/// max over the M frequency bins of the largest singular value of the
/// transfer matrix. Zero-padded convolution on length T embeds into the
/// circle of length T + tap count, so this also upper-bounds the induced
/// norm at every length <= T.
double circular_conv_norm(const Tensor& kernel, std::size_t M);

/// Scales `kernel` so its induced operator norm at every length <= T is
/// <= bound, using the circular-embedding certificate (power iteration
/// converges too slowly on the near-flat conv spectrum to give a hard
/// guarantee at this tolerance).
void project_conv_kernel(Tensor& kernel, double bound, std::size_t T,
                         Tensor* warm = nullptr);

/// Convolution with a spectral-norm-constrained kernel parameter. The kernel
/// is expected to have been projected already (every optimizer step projects);
/// this wrapper only validates the width contract and applies the op.
Tensor lipschitz_conv1d(const Tensor& signal, const Param& kernel);

}  // namespace lipscde
