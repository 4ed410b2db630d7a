#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/scde.hpp"
#include "test_util.hpp"

using namespace lipscde;
namespace tt = lipscde::testing;

namespace {

std::vector<double> uniform_grid(double a, double b, std::size_t steps) {
  std::vector<double> g(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    g[i] = a + (b - a) * double(i) / double(steps);
  return g;
}

}  // namespace

TEST_CASE("linear segment evaluation and derivative") {
  std::vector<double> ts{0.0, 2.0};
  Tensor vals = Tensor::matrix(2, 1, {0.0, 4.0});
  ControlPath path = build_control_path(ts, vals);
  CHECK(path.at(1.0)[0] == doctest::Approx(2.0));
  CHECK(path.derivative(0.5)[0] == doctest::Approx(2.0));
}

TEST_CASE("path reproduces every knot value exactly") {
  std::vector<double> ts{0.0, 0.3, 0.7, 1.0, 1.5};
  Tensor vals = tt::random_matrix(5, 3, 42);
  ControlPath path = build_control_path(ts, vals);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Tensor v = path.at(ts[i]);
    for (std::size_t c = 0; c < 3; ++c) CHECK(v[c] == vals(i, c));
  }
}

TEST_CASE("integral of the derivative recovers the endpoint difference") {
  std::vector<double> ts{0.0, 0.4, 1.1, 2.0};
  Tensor vals = tt::random_matrix(4, 2, 43);
  ControlPath path = build_control_path(ts, vals);
  std::size_t n = 1000;
  Tensor acc(2);
  for (std::size_t i = 0; i < n; ++i) {
    double t = (double(i) + 0.5) * 2.0 / double(n);  // midpoint rule on [0,2]
    Tensor d = path.derivative(t);
    for (std::size_t c = 0; c < 2; ++c) acc[c] += d[c] * (2.0 / double(n));
  }
  for (std::size_t c = 0; c < 2; ++c)
    CHECK(std::abs(acc[c] - (vals(3, c) - vals(0, c))) < 1e-6);
}

TEST_CASE("control path contracts") {
  Tensor one = Tensor::matrix(1, 1, {0.0});
  std::vector<double> single{0.0};
  CHECK_THROWS_AS(build_control_path(single, one), ContractViolation);
  std::vector<double> dup{0.0, 0.0};
  Tensor two = Tensor::matrix(2, 1, {0.0, 1.0});
  CHECK_THROWS_AS(build_control_path(dup, two), ContractViolation);
  std::vector<double> ok{0.0, 1.0};
  ControlPath p = build_control_path(ok, two);
  CHECK_THROWS_AS(p.at(-0.1), ContractViolation);
  CHECK_THROWS_AS(p.at(1.1), ContractViolation);
}

TEST_CASE("geometric-growth controlled Euler: (1.001)^1000") {
  // du = u dH with H(t) = t: every step multiplies by (1 + 0.001)
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 1, {0.0, 1.0}));
  Field drift = [](const Tensor& u, double) {
    Tensor f(u.size(), std::size_t(1));
    f(0, 0) = u[0];
    return f;
  };
  Tensor u0 = Tensor::vec({1.0});
  std::vector<double> grid = uniform_grid(0.0, 1.0, 1000);
  LatentPath path = solve_scde(drift, nullptr, u0, h, nullptr, grid);

  // exact geometric-product oracle using the same increments
  double oracle = 1.0;
  for (std::size_t n = 0; n + 1 < grid.size(); ++n)
    oracle *= 1.0 + (grid[n + 1] - grid[n]);
  double got = path.states(path.length() - 1, 0);
  CHECK(got == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(got == doctest::Approx(2.716924).epsilon(1e-5));
  CHECK(std::abs(got - std::exp(1.0)) < 2e-3);
}

TEST_CASE("zero fields keep the path constant") {
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 1, {0.0, 1.0}));
  Field zero = [](const Tensor& u, double) { return Tensor(u.size(), std::size_t(1)); };
  Tensor u0 = Tensor::vec({0.7});
  std::vector<double> grid = uniform_grid(0.0, 1.0, 50);
  LatentPath path = solve_scde(zero, &zero, u0, h, nullptr, grid);
  for (std::size_t i = 0; i < path.length(); ++i)
    CHECK(path.states(i, 0) == 0.7);
}

TEST_CASE("pure Brownian integration matches the moments of W(1)") {
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 1, {0.0, 1.0}));
  Field zero = [](const Tensor& u, double) { return Tensor(u.size(), std::size_t(1)); };
  Field eye = [](const Tensor& u, double) {
    Tensor g(u.size(), u.size());
    for (std::size_t i = 0; i < u.size(); ++i) g(i, i) = 1.0;
    return g;
  };
  std::vector<double> grid = uniform_grid(0.0, 1.0, 20);
  Tensor u0 = Tensor::vec({2.0});

  std::size_t n_paths = 10000;
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t s = 0; s < n_paths; ++s) {
    BrownianDriver w(s, 1);
    LatentPath p = solve_scde(zero, &eye, u0, h, &w, grid);
    double x = p.states(p.length() - 1, 0);
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / double(n_paths);
  double var = sumsq / double(n_paths) - mean * mean;
  double se = std::sqrt(var / double(n_paths));
  CHECK(std::abs(mean - 2.0) < 3.0 * se);     // mean within 3 standard errors
  CHECK(std::abs(var - 1.0) < 0.1);           // variance within 10% of t = 1
}

TEST_CASE("determinism: identical seeds give bit-identical paths") {
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 2, {0.0, 0.0, 1.0, -0.5}));
  Field drift = [](const Tensor& u, double) {
    Tensor f(u.size(), std::size_t(2));
    for (std::size_t i = 0; i < u.size(); ++i) {
      f(i, 0) = std::tanh(u[i]);
      f(i, 1) = 0.3 * u[i];
    }
    return f;
  };
  Field diff = [](const Tensor& u, double) {
    Tensor g(u.size(), std::size_t(3));
    for (std::size_t i = 0; i < u.size(); ++i) g(i, i % 3) = 0.5;
    return g;
  };
  std::vector<double> grid = uniform_grid(0.0, 1.0, 40);
  Tensor u0 = tt::random_vector(3, 7);
  BrownianDriver w1(99, 3), w2(99, 3);
  LatentPath a = solve_scde(drift, &diff, u0, h, &w1, grid);
  LatentPath b = solve_scde(drift, &diff, u0, h, &w2, grid);
  CHECK(a.states == b.states);

  BrownianDriver w3(100, 3);
  LatentPath c = solve_scde(drift, &diff, u0, h, &w3, grid);
  CHECK_FALSE(a.states == c.states);
}

TEST_CASE("zero diffusion reduces exactly to the deterministic solve") {
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 1, {0.0, 1.0}));
  Field drift = [](const Tensor& u, double t) {
    Tensor f(u.size(), std::size_t(1));
    f(0, 0) = std::sin(u[0]) + t;
    return f;
  };
  Field zero_diff = [](const Tensor& u, double) {
    return Tensor(u.size(), std::size_t(2));
  };
  std::vector<double> grid = uniform_grid(0.0, 1.0, 33);
  Tensor u0 = Tensor::vec({0.2});
  BrownianDriver w(5, 2);
  LatentPath with_zero_g = solve_scde(drift, &zero_diff, u0, h, &w, grid);
  LatentPath plain = solve_scde(drift, nullptr, u0, h, nullptr, grid);
  CHECK(with_zero_g.states == plain.states);
}

TEST_CASE("latent path hits every observation time of the control path") {
  std::vector<double> ts{0.0, 0.37, 0.61, 1.0};
  Tensor vals = tt::random_matrix(4, 2, 44);
  ControlPath h = build_control_path(ts, vals);
  std::vector<double> grid = make_solver_grid(ts, 0.05);
  Field drift = [](const Tensor& u, double) {
    Tensor f(u.size(), std::size_t(2));
    f(0, 0) = 0.1;
    return f;
  };
  LatentPath p = solve_scde(drift, nullptr, Tensor::vec({0.0}), h, nullptr, grid);
  for (double t : ts) {
    bool found = false;
    for (double g : p.times) found = found || g == t;
    CHECK(found);
  }
}

TEST_CASE("grid must include all observation times") {
  std::vector<double> ts{0.0, 0.5, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(3, 1, {0.0, 1.0, 0.0}));
  Field drift = [](const Tensor& u, double) { return Tensor(u.size(), std::size_t(1)); };
  std::vector<double> bad{0.0, 0.4, 1.0};
  CHECK_THROWS_AS(solve_scde(drift, nullptr, Tensor::vec({0.0}), h, nullptr, bad),
                  ContractViolation);
}

TEST_CASE("non-finite state reports the failing step") {
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 1, {0.0, 1.0}));
  Field explode = [](const Tensor& u, double t) {
    Tensor f(u.size(), std::size_t(1));
    f(0, 0) = t > 0.5 ? 1e308 : 0.0;
    return f;
  };
  std::vector<double> grid = uniform_grid(0.0, 1.0, 10);
  try {
    // 1e308 * 0.1 is fine once, but accumulates to inf over repeated steps
    Field worse = [](const Tensor& u, double) {
      Tensor f(u.size(), std::size_t(1));
      f(0, 0) = 1e308;
      return f;
    };
    solve_scde(worse, nullptr, Tensor::vec({1e308}), h, nullptr, grid);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.step() >= 0);
  }
}

TEST_CASE("make_solver_grid keeps aligned grids untouched and splits long gaps") {
  std::vector<double> aligned;
  for (int k = 0; k < 30; ++k) aligned.push_back(double(k) / 29.0);
  std::vector<double> g = make_solver_grid(aligned, 1.0 / 29.0 + 1e-12);
  CHECK(g.size() == aligned.size());

  std::vector<double> sparse{0.0, 1.0};
  std::vector<double> g2 = make_solver_grid(sparse, 0.3);
  CHECK(g2.size() == 5);  // 4 equal parts
  CHECK(g2.front() == 0.0);
  CHECK(g2.back() == 1.0);
  for (std::size_t i = 0; i + 1 < g2.size(); ++i)
    CHECK(g2[i + 1] - g2[i] <= 0.3 + 1e-12);
}

TEST_CASE("refine_convergence: first-order slope on the linear field") {
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 1, {0.0, 1.0}));
  Field drift = [](const Tensor& u, double) {
    Tensor f(u.size(), std::size_t(1));
    f(0, 0) = u[0];
    return f;
  };
  std::vector<double> dts{0.1, 0.05, 0.025, 0.0125};
  ConvergenceReport rep = refine_convergence(drift, h, Tensor::vec({1.0}), dts);
  CHECK(rep.slope >= 0.9);
  CHECK(rep.slope <= 1.1);
  for (std::size_t i = 0; i + 1 < rep.errors.size(); ++i) {
    double ratio = rep.errors[i] / rep.errors[i + 1];
    CHECK(ratio >= 1.8);
    CHECK(ratio <= 2.2);
  }
  // errors non-increasing as dt decreases
  for (std::size_t i = 0; i + 1 < rep.errors.size(); ++i)
    CHECK(rep.errors[i + 1] <= rep.errors[i]);
}

TEST_CASE("refine_convergence: zero field has exactly zero error") {
  std::vector<double> ts{0.0, 1.0};
  ControlPath h = build_control_path(ts, Tensor::matrix(2, 1, {0.0, 1.0}));
  Field drift = [](const Tensor& u, double) { return Tensor(u.size(), std::size_t(1)); };
  std::vector<double> dts{0.1, 0.05};
  ConvergenceReport rep = refine_convergence(drift, h, Tensor::vec({0.4}), dts);
  for (double e : rep.errors) CHECK(e == 0.0);
}
