#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/lipschitz.hpp"
#include "svd_oracle.hpp"
#include "test_util.hpp"

using namespace lipscde;
namespace tt = lipscde::testing;

TEST_CASE("identity stays unchanged under projection to bound 1") {
  Tensor id = Tensor::identity(2);
  Tensor out = spectral_norm_project(id, 1.0);
  CHECK(out == id);
}

TEST_CASE("diag(2,0) projects onto diag(1,0)") {
  Tensor m = Tensor::matrix(2, 2, {2.0, 0.0, 0.0, 0.0});
  // exact SVD of this matrix: sigma = {2, 0}
  CHECK(tt::spectral_norm_oracle(m) == doctest::Approx(2.0).epsilon(1e-12));
  Tensor out = spectral_norm_project(m, 1.0);
  CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(out(0, 1)) < 1e-15);
  CHECK(std::abs(out(1, 0)) < 1e-15);
  CHECK(std::abs(out(1, 1)) < 1e-15);
}

TEST_CASE("random 5x3, bound 0.9: oracle norm of the projection <= bound + 1e-6") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Tensor m = tt::random_matrix(5, 3, 500 + seed, 1.4);
    Tensor out = spectral_norm_project(m, 0.9);
    CHECK(tt::spectral_norm_oracle(out) <= 0.9 + 1e-6);
  }
}

TEST_CASE("zero matrix returned unchanged") {
  Tensor z(3, 3);
  CHECK(spectral_norm_project(z, 1.0) == z);
}

TEST_CASE("power-iteration norm agrees with the SVD oracle") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    Tensor m = tt::random_matrix(4 + seed % 3, 3 + seed % 4, 600 + seed);
    CHECK(spectral_norm(m) ==
          doctest::Approx(tt::spectral_norm_oracle(m)).epsilon(1e-8));
  }
  // a matrix whose top singular direction is orthogonal to the all-ones start
  Tensor tricky = Tensor::matrix(1, 2, {1.0, -1.0});
  CHECK(spectral_norm(tricky) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("projection is idempotent within 1e-8") {
  Tensor m = tt::random_matrix(6, 4, 700, 1.3);
  Tensor once = spectral_norm_project(m, 0.8);
  Tensor twice = spectral_norm_project(once, 0.8);
  for (std::size_t i = 0; i < m.size(); ++i)
    CHECK(std::abs(twice[i] - once[i]) < 1e-8);
}

TEST_CASE("projected map is empirically 1-Lipschitz") {
  Tensor m = tt::random_matrix(5, 5, 800, 2.0);
  Tensor p = spectral_norm_project(m, 1.0);
  for (uint64_t trial = 0; trial < 50; ++trial) {
    Tensor x = tt::random_vector(5, 900 + trial);
    Tensor y = tt::random_vector(5, 950 + trial);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      double dx = 0.0;
      for (std::size_t jc = 0; jc < 5; ++jc) dx += p(i, jc) * (x[jc] - y[jc]);
      num += dx * dx;
      den += (x[i] - y[i]) * (x[i] - y[i]);
    }
    CHECK(std::sqrt(num) <= std::sqrt(den) * (1.0 + 1e-6));
  }
}

TEST_CASE("conv1d_same: delta kernel is the identity") {
  // single input channel, single output channel, centered unit tap
  Tensor k(1, 1, 5);
  k(0, 0, 2) = 1.0;
  Tensor x = tt::random_matrix(9, 1, 1000);
  Tensor out = conv1d_same(x, k);
  for (std::size_t t = 0; t < 9; ++t)
    CHECK(out(t, 0) == doctest::Approx(x(t, 0)).epsilon(1e-15));
}

TEST_CASE("conv1d_same: zero kernel gives zero output") {
  Tensor k(2, 3, 5);
  Tensor x = tt::random_matrix(6, 3, 1001);
  Tensor out = conv1d_same(x, k);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("conv1d_same matches a sliding-window oracle") {
  Tensor k = tt::random_kernel(1, 1, 5, 1002);
  Tensor x = tt::random_matrix(11, 1, 1003);
  Tensor out = conv1d_same(x, k);
  for (std::size_t t = 0; t < 11; ++t) {
    double acc = 0.0;
    for (int q = 0; q < 5; ++q) {
      int src = int(t) + q - 2;
      if (src < 0 || src >= 11) continue;
      acc += k(0, 0, std::size_t(q)) * x(std::size_t(src), 0);
    }
    CHECK(out(t, 0) == doctest::Approx(acc).epsilon(1e-10));
  }
}

TEST_CASE("kernel wider than 2T is a contract violation") {
  Tensor k(1, 1, 9);
  Tensor x = tt::random_matrix(4, 1, 1004);
  CHECK_THROWS_AS(conv1d_same(x, k), ContractViolation);
}

TEST_CASE("conv operator norm matches the induced-matrix oracle") {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    Tensor k = tt::random_kernel(2, 3, 5, 1100 + seed, 0.8);
    for (std::size_t T : {6u, 12u}) {
      double got = conv_operator_norm(k, T);
      double want = tt::spectral_norm_oracle(tt::conv_induced_matrix(k, T));
      CHECK(got == doctest::Approx(want).epsilon(1e-7));
    }
  }
}

TEST_CASE("conv operator norm is non-decreasing in signal length") {
  Tensor k = tt::random_kernel(2, 2, 5, 1200, 0.8);
  double prev = 0.0;
  for (std::size_t T : {4u, 8u, 16u, 32u}) {
    double v = conv_operator_norm(k, T);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("projected conv kernel is non-expansive at and below the certified length") {
  Tensor k = tt::random_kernel(3, 2, 5, 1300, 1.0);
  project_conv_kernel(k, 1.0, 32);
  for (std::size_t T : {5u, 11u, 32u}) {
    double norm = tt::spectral_norm_oracle(tt::conv_induced_matrix(k, T));
    CHECK(norm <= 1.0 + 1e-6);
  }
}

TEST_CASE("circular embedding upper-bounds the padded conv operator") {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    Tensor k = tt::random_kernel(3, 2, 5, 1400 + seed, 0.7);
    for (std::size_t T : {6u, 12u, 24u}) {
      double padded = tt::spectral_norm_oracle(tt::conv_induced_matrix(k, T));
      double circ = circular_conv_norm(k, T + 5);
      CHECK(circ >= padded - 1e-10);
      CHECK(circ <= padded * 1.25);  // tight enough to be a useful projection
    }
  }
}
