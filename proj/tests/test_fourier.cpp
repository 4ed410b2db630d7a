#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lipscde/errors.hpp"
#include "lipscde/fourier.hpp"
#include "test_util.hpp"

using namespace lipscde;
namespace tt = lipscde::testing;

namespace {

// O(n^2) reference written independently of the library path: accumulates
// with long doubles and explicit angle arithmetic.
Spectrum naive_dft(const Tensor& x) {
  std::size_t n = x.size();
  Spectrum s{Tensor(n), Tensor(n)};
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      long double ang = -2.0L * std::numbers::pi_v<long double> *
                        (long double)(j * k) / (long double)n;
      re += (long double)x[j] * std::cos((double)ang);
      im += (long double)x[j] * std::sin((double)ang);
    }
    s.real[k] = double(re);
    s.imag[k] = double(im);
  }
  return s;
}

}  // namespace

TEST_CASE("constant signal concentrates at bin zero") {
  Spectrum s = dft(Tensor::vec({1.0, 1.0, 1.0, 1.0}));
  CHECK(s.real[0] == doctest::Approx(4.0).epsilon(1e-12));
  for (std::size_t k = 1; k < 4; ++k) {
    CHECK(std::abs(s.real[k]) < 1e-12);
    CHECK(std::abs(s.imag[k]) < 1e-12);
  }
}

TEST_CASE("idft(dft(x)) recovers x within 1e-9") {
  for (std::size_t n : {2u, 5u, 8u, 30u, 31u}) {
    Tensor x = tt::random_vector(n, 100 + n);
    Tensor back = idft(dft(x));
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(back[i] - x[i]) < 1e-9);
  }
}

TEST_CASE("length-7 transform matches the naive oracle within 1e-10") {
  Tensor x = tt::random_vector(7, 7);
  Spectrum got = dft(x);
  Spectrum want = naive_dft(x);
  for (std::size_t k = 0; k < 7; ++k) {
    CHECK(std::abs(got.real[k] - want.real[k]) < 1e-10);
    CHECK(std::abs(got.imag[k] - want.imag[k]) < 1e-10);
  }
}

TEST_CASE("dft linearity within 1e-9") {
  Tensor x = tt::random_vector(12, 201);
  Tensor y = tt::random_vector(12, 202);
  double a = 1.7, b = -0.4;
  Tensor mix(12);
  for (std::size_t i = 0; i < 12; ++i) mix[i] = a * x[i] + b * y[i];
  Spectrum sm = dft(mix), sx = dft(x), sy = dft(y);
  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(std::abs(sm.real[k] - (a * sx.real[k] + b * sy.real[k])) < 1e-9);
    CHECK(std::abs(sm.imag[k] - (a * sx.imag[k] + b * sy.imag[k])) < 1e-9);
  }
}

TEST_CASE("empty signal is a contract violation") {
  CHECK_THROWS_AS(dft(Tensor()), ContractViolation);
}

TEST_CASE("gaussian masks partition unity exactly") {
  for (std::size_t n : {2u, 8u, 30u, 33u}) {
    auto [low, high] = gaussian_masks(n, 0.9);
    for (std::size_t k = 0; k < n; ++k)
      CHECK(std::abs(low[k] + high[k] - 1.0) < 1e-12);
  }
}

TEST_CASE("zero-frequency bin: low mask 1, high mask 0") {
  auto [low, high] = gaussian_masks(16, 0.5);
  CHECK(low[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(high[0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("n=8, sigma_f=1: mask equals direct per-bin evaluation") {
  auto [low, high] = gaussian_masks(8, 1.0);
  for (std::size_t k = 0; k < 8; ++k) {
    double kk = double(k) > 4.0 ? double(k) - 8.0 : double(k);
    double w = 2.0 * std::numbers::pi * kk / 8.0;
    double expect = std::exp(-w * w / 2.0);
    CHECK(low[k] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(high[k] == doctest::Approx(1.0 - expect).epsilon(1e-14));
  }
}

TEST_CASE("sigma_f <= 0 is a contract violation") {
  CHECK_THROWS_AS(gaussian_masks(8, 0.0), ContractViolation);
  CHECK_THROWS_AS(gaussian_masks(8, -1.0), ContractViolation);
}

TEST_CASE("band_filter equals mask application in the frequency domain") {
  Tensor x = tt::random_vector(14, 300);
  auto [low, high] = gaussian_masks(14, 0.7);
  Tensor lo = band_filter(x, low);
  Tensor hi = band_filter(x, high);
  // masks sum to one, so the bands reconstruct the signal
  for (std::size_t i = 0; i < 14; ++i)
    CHECK(lo[i] + hi[i] == doctest::Approx(x[i]).epsilon(1e-10));
}

TEST_CASE("band_filter_row reproduces band_filter through circular convolution") {
  std::size_t n = 11;
  Tensor x = tt::random_vector(n, 301);
  auto [low, high] = gaussian_masks(n, 0.6);
  Tensor row = band_filter_row(low);
  Tensor want = band_filter(x, low);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t m = 0; m < n; ++m) acc += row[m] * x[(t + n - m) % n];
    CHECK(acc == doctest::Approx(want[t]).epsilon(1e-10));
  }
}
