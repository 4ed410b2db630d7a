#pragma once

#include <utility>

#include "lipscde/tensor.hpp"

namespace lipscde {

/// Frequency-domain representation of a real signal: X_k = sum_j x_j e^{-2*pi*i*jk/n}.
struct Spectrum {
  Tensor real;
  Tensor imag;

  std::size_t size() const { return real.size(); }
};

/// Forward DFT of a length-n real signal. Direct O(n^2) evaluation; the
/// signals here are a few dozen samples long so this is never the bottleneck.
Spectrum dft(const Tensor& signal);

/// Inverse DFT; returns the real part (imaginary part of a round trip is
/// zero up to rounding).
Tensor idft(const Spectrum& spec);

/// Signed angular frequency of bin k for length n, in radians per sample:
/// omega in (-pi, pi].
double signed_omega(std::size_t k, std::size_t n);

/// Gaussian low/high-pass masks: low_k = exp(-omega_k^2 / (2 sigma_f^2)),
/// high_k = 1 - low_k, so the pair partitions unity exactly.
std::pair<Tensor, Tensor> gaussian_masks(std::size_t n, double sigma_f);

/// Time-domain band filtering: real(idft(mask * dft(x))). The map is a
/// symmetric circulant, so it equals its own adjoint.
Tensor band_filter(const Tensor& signal, const Tensor& mask);

/// Circulant row of the band filter: row[m] = (1/n) sum_k mask_k cos(2 pi k m / n).
/// band[t] = sum_m row[m] * x[(t - m) mod n].
Tensor band_filter_row(const Tensor& mask);

}  // namespace lipscde
