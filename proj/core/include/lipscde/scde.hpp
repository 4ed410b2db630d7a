#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lipscde/control_path.hpp"
#include "lipscde/rng.hpp"
#include "lipscde/tape.hpp"
#include "lipscde/tensor.hpp"

namespace lipscde {

/// Brownian motion sampled by counter: the increment over step n of width dt
/// is N(0, dt I), keyed on (seed, step, dim) so the same seed reproduces the
/// same path regardless of evaluation order.
class BrownianDriver {
 public:
  BrownianDriver(uint64_t seed, std::size_t dim) : seed_(seed), dim_(dim) {}

  std::size_t dim() const { return dim_; }
  uint64_t seed() const { return seed_; }

  Tensor increment(std::size_t step, double dt) const;

 private:
  uint64_t seed_;
  std::size_t dim_;
};

/// Latent trajectory sampled from the solver.
struct LatentPath {
  std::vector<double> times;
  Tensor states;  // [k x l]

  std::size_t length() const { return times.size(); }
  std::size_t latent_dim() const { return states.cols(); }
};

/// Vector field of the equation: maps (state, t) to a matrix that contracts
/// with the control increment (drift: [l x c]) or the Brownian increment
/// (diffusion: [l x w]).
using Field = std::function<Tensor(const Tensor& u, double t)>;

/// Fixed-step Euler-Maruyama for
///   du = f(u,t) dH + g(u,t) dW
/// on the given grid:
///   u_{n+1} = u_n + f(u_n,t_n) (H(t_{n+1})-H(t_n)) + g(u_n,t_n) dW_n.
/// Pass diffusion = nullptr (or driver = nullptr) for the deterministic CDE.
/// The grid must be ascending, lie within the path domain, and contain every
/// observation time of H.
LatentPath solve_scde(const Field& drift, const Field* diffusion, const Tensor& u0,
                      const ControlPath& control, const BrownianDriver* driver,
                      std::span<const double> grid);

/// Observation grid augmented so that no step exceeds max_step: each gap is
/// split into equal parts. Gaps already small enough are kept as-is, so when
/// observations sit on a uniform grid with spacing <= max_step the solver
/// grid is exactly the observation grid.
std::vector<double> make_solver_grid(std::span<const double> obs_times, double max_step);

struct ConvergenceReport {
  std::vector<double> dts;
  std::vector<double> errors;  // max-abs error at the final time vs dt/10 reference
  double slope = 0.0;          // log-log least-squares slope over positive errors
};

/// Deterministic grid-refinement study of the Euler integrator against a
/// reference solution at min(dt)/10.
ConvergenceReport refine_convergence(const Field& drift, const ControlPath& control,
                                     const Tensor& u0, std::span<const double> dt_list);

/// Tape-mode integrator: the model supplies step(u_n, n) -> u_{n+1} with the
/// field contraction already fused; this runs the recursion and records the
/// state at every grid point.
template <class StepFn>
std::vector<Var> solve_scde_tape(std::span<const double> grid, Var u0, StepFn&& step) {
  std::vector<Var> states;
  states.reserve(grid.size());
  states.push_back(u0);
  Var u = u0;
  for (std::size_t n = 0; n + 1 < grid.size(); ++n) {
    u = step(u, n);
    states.push_back(u);
  }
  return states;
}

}  // namespace lipscde
