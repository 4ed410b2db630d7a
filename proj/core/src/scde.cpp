#include "lipscde/scde.hpp"

#include <algorithm>
#include <cmath>

#include "lipscde/errors.hpp"

namespace lipscde {

Tensor BrownianDriver::increment(std::size_t step, double dt) const {
  Tensor out(dim_);
  double sd = std::sqrt(dt);
  for (std::size_t d = 0; d < dim_; ++d)
    out[d] = sd * rng_normal(seed_, Stream::kBrownian, step, d);
  return out;
}

namespace {

void check_grid(const ControlPath& control, std::span<const double> grid) {
  if (grid.size() < 2) throw ContractViolation("solve_scde: grid needs >= 2 points");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1]))
      throw ContractViolation("solve_scde: grid must be ascending");
  if (grid.front() < control.t_begin() || grid.back() > control.t_end())
    throw ContractViolation("solve_scde: grid outside control path domain");
  // every observation time must be hit exactly
  for (double k : control.knots()) {
    if (!std::binary_search(grid.begin(), grid.end(), k))
      throw ContractViolation("solve_scde: grid must include all observation times");
  }
}

}  // namespace

LatentPath solve_scde(const Field& drift, const Field* diffusion, const Tensor& u0,
                      const ControlPath& control, const BrownianDriver* driver,
                      std::span<const double> grid) {
  check_grid(control, grid);
  std::size_t l = u0.size();
  LatentPath out;
  out.times.assign(grid.begin(), grid.end());
  out.states = Tensor(grid.size(), l);

  Tensor u = u0;
  for (std::size_t c = 0; c < l; ++c) out.states(0, c) = u[c];

  bool noisy = diffusion != nullptr && driver != nullptr;
  for (std::size_t n = 0; n + 1 < grid.size(); ++n) {
    double t = grid[n];
    Tensor dh = control.increment(t, grid[n + 1]);
    Tensor f = drift(u, t);
    if (f.rank() != 2 || f.rows() != l || f.cols() != dh.size())
      throw ContractViolation("solve_scde: drift field must be [l x c]");
    Tensor next = u;
    for (std::size_t i = 0; i < l; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dh.size(); ++c) acc += f(i, c) * dh[c];
      next[i] += acc;
    }
    if (noisy) {
      Tensor dw = driver->increment(n, grid[n + 1] - t);
      Tensor g = (*diffusion)(u, t);
      if (g.rank() != 2 || g.rows() != l || g.cols() != dw.size())
        throw ContractViolation("solve_scde: diffusion field must be [l x w]");
      for (std::size_t i = 0; i < l; ++i) {
        double acc = 0.0;
        for (std::size_t w = 0; w < dw.size(); ++w) acc += g(i, w) * dw[w];
        next[i] += acc;
      }
    }
    if (!next.all_finite()) throw NumericalError("solve_scde", long(n));
    u = std::move(next);
    for (std::size_t c = 0; c < l; ++c) out.states(n + 1, c) = u[c];
  }
  return out;
}

std::vector<double> make_solver_grid(std::span<const double> obs_times, double max_step) {
  if (obs_times.size() < 2)
    throw ContractViolation("make_solver_grid: need >= 2 observation times");
  if (max_step <= 0.0) throw ContractViolation("make_solver_grid: max_step must be positive");
  std::vector<double> grid;
  grid.push_back(obs_times[0]);
  for (std::size_t i = 0; i + 1 < obs_times.size(); ++i) {
    double a = obs_times[i], b = obs_times[i + 1];
    double gap = b - a;
    auto parts = std::size_t(std::ceil(gap / max_step - 1e-12));
    if (parts < 1) parts = 1;
    for (std::size_t p = 1; p < parts; ++p)
      grid.push_back(a + gap * double(p) / double(parts));
    grid.push_back(b);
  }
  return grid;
}

ConvergenceReport refine_convergence(const Field& drift, const ControlPath& control,
                                     const Tensor& u0, std::span<const double> dt_list) {
  if (dt_list.empty()) throw ContractViolation("refine_convergence: empty dt list");
  double span = control.t_end() - control.t_begin();
  auto solve_final = [&](double dt) {
    auto n = std::size_t(std::max<long long>(1, std::llround(span / dt)));
    std::vector<double> grid(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
      grid[i] = control.t_begin() + span * double(i) / double(n);
    grid.front() = control.t_begin();
    grid.back() = control.t_end();
    LatentPath p = solve_scde(drift, nullptr, u0, control, nullptr, grid);
    Tensor fin(u0.size());
    for (std::size_t c = 0; c < u0.size(); ++c)
      fin[c] = p.states(p.length() - 1, c);
    return fin;
  };

  double dt_min = *std::min_element(dt_list.begin(), dt_list.end());
  Tensor ref = solve_final(dt_min / 10.0);

  ConvergenceReport rep;
  rep.dts.assign(dt_list.begin(), dt_list.end());
  for (double dt : dt_list) {
    Tensor fin = solve_final(dt);
    double err = 0.0;
    for (std::size_t c = 0; c < fin.size(); ++c)
      err = std::max(err, std::abs(fin[c] - ref[c]));
    rep.errors.push_back(err);
  }

  // least-squares slope of log(err) against log(dt), positive errors only
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rep.errors.size(); ++i) {
    if (rep.errors[i] <= 0.0) continue;
    double x = std::log(rep.dts[i]), y = std::log(rep.errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n >= 2) {
    double denom = double(n) * sxx - sx * sx;
    rep.slope = denom != 0.0 ? (double(n) * sxy - sx * sy) / denom : 0.0;
  }
  return rep;
}

}  // namespace lipscde
