#include "lipscde/fourier.hpp"

#include <cmath>
#include <numbers>

#include "lipscde/errors.hpp"

namespace lipscde {

Spectrum dft(const Tensor& signal) {
  if (signal.size() == 0) throw ContractViolation("dft: empty signal");
  std::size_t n = signal.size();
  Spectrum s{Tensor(n), Tensor(n)};
  const double w = -2.0 * std::numbers::pi / double(n);
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double a = w * double(j) * double(k);
      re += signal[j] * std::cos(a);
      im += signal[j] * std::sin(a);
    }
    s.real[k] = re;
    s.imag[k] = im;
  }
  return s;
}

Tensor idft(const Spectrum& spec) {
  if (spec.real.size() == 0) throw ContractViolation("idft: empty spectrum");
  if (!spec.real.same_shape(spec.imag))
    throw ContractViolation("idft: real/imag shape mismatch");
  std::size_t n = spec.real.size();
  Tensor x(n);
  const double w = 2.0 * std::numbers::pi / double(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double a = w * double(j) * double(k);
      acc += spec.real[k] * std::cos(a) - spec.imag[k] * std::sin(a);
    }
    x[j] = acc / double(n);
  }
  return x;
}

double signed_omega(std::size_t k, std::size_t n) {
  double kk = double(k);
  if (kk > double(n) / 2.0) kk -= double(n);
  return 2.0 * std::numbers::pi * kk / double(n);
}

std::pair<Tensor, Tensor> gaussian_masks(std::size_t n, double sigma_f) {
  if (sigma_f <= 0.0) throw ContractViolation("gaussian_masks: sigma_f must be positive");
  if (n == 0) throw ContractViolation("gaussian_masks: n must be positive");
  Tensor low(n), high(n);
  for (std::size_t k = 0; k < n; ++k) {
    double w = signed_omega(k, n);
    low[k] = std::exp(-w * w / (2.0 * sigma_f * sigma_f));
    high[k] = 1.0 - low[k];
  }
  return {low, high};
}

Tensor band_filter(const Tensor& signal, const Tensor& mask) {
  if (signal.size() != mask.size())
    throw ContractViolation("band_filter: mask length mismatch");
  Spectrum s = dft(signal);
  for (std::size_t k = 0; k < s.size(); ++k) {
    s.real[k] *= mask[k];
    s.imag[k] *= mask[k];
  }
  return idft(s);
}

Tensor band_filter_row(const Tensor& mask) {
  std::size_t n = mask.size();
  Tensor row(n);
  const double w = 2.0 * std::numbers::pi / double(n);
  for (std::size_t m = 0; m < n; ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += mask[k] * std::cos(w * double(k) * double(m));
    row[m] = acc / double(n);
  }
  return row;
}

}  // namespace lipscde
