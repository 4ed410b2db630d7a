#include "lipscde/msm.hpp"

#include <algorithm>
#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/scde.hpp"

namespace lipscde {

namespace {

constexpr double kRidge = 1e-6;
constexpr double kProbFloor = 1e-6;

// Dense Cholesky solve of A x = b for SPD A; returns false if a pivot fails.
bool cholesky_solve(Tensor a, std::vector<double> b, std::vector<double>& out) {
  std::size_t n = b.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s)) return false;
        a(i, i) = std::sqrt(s);
      } else {
        a(i, j) = s / a(j, j);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
    b[i] = s / a(i, i);
  }
  out.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * out[k];
    out[i] = s / a(i, i);
  }
  return true;
}

struct GridView {
  std::vector<double> times;
  std::vector<double> xbar;              // per grid step
  std::vector<std::vector<double>> a;    // per grid step, per channel
  std::vector<double> abar;
  std::vector<double> y;
  std::vector<std::size_t> obs_index;    // observation -> grid index
};

GridView carry_to_grid(const ObservedUnit& unit, double max_step,
                       const Tensor* plan = nullptr) {
  GridView g;
  g.times = make_solver_grid(*unit.timestamps, max_step);
  std::size_t tg = g.times.size();
  std::size_t d = unit.covariate_dim(), j = unit.treatment_dim();
  const Tensor& a_src = plan != nullptr ? *plan : *unit.a;
  g.xbar.resize(tg);
  g.abar.resize(tg);
  g.y.resize(tg);
  g.a.assign(tg, std::vector<double>(j));
  g.obs_index.resize(unit.length());
  std::size_t oi = 0;
  for (std::size_t n = 0; n < tg; ++n) {
    while (oi + 1 < unit.length() && (*unit.timestamps)[oi + 1] <= g.times[n]) ++oi;
    if ((*unit.timestamps)[oi] == g.times[n]) g.obs_index[oi] = n;
    double xs = 0.0;
    for (std::size_t c = 0; c < d; ++c) xs += (*unit.x)(oi, c);
    g.xbar[n] = xs / double(d);
    double as = 0.0;
    for (std::size_t c = 0; c < j; ++c) {
      g.a[n][c] = a_src(oi, c);
      as += a_src(oi, c);
    }
    g.abar[n] = as / double(j);
    g.y[n] = (*unit.y)[oi];
  }
  g.obs_index[0] = 0;
  return g;
}

std::vector<double> prop_features(const GridView& g, std::size_t n, std::size_t j) {
  std::vector<double> f(2 + j);
  f[0] = 1.0;
  f[1] = g.xbar[n];
  for (std::size_t c = 0; c < j; ++c) f[2 + c] = n > 0 ? g.a[n - 1][c] : 0.0;
  return f;
}

// IRLS logistic regression; deterministic, capped iterations, ridge-stabilized.
std::vector<double> fit_logistic(const std::vector<std::vector<double>>& rows,
                                 std::span<const double> targets, bool* ridge_used) {
  std::size_t p = rows.empty() ? 0 : rows[0].size();
  std::vector<double> beta(p, 0.0);
  for (int iter = 0; iter < 30; ++iter) {
    Tensor xtx(p, p);
    std::vector<double> xtz(p, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double eta = 0.0;
      for (std::size_t k = 0; k < p; ++k) eta += beta[k] * rows[i][k];
      eta = std::clamp(eta, -30.0, 30.0);
      double mu = 1.0 / (1.0 + std::exp(-eta));
      double w = std::max(mu * (1.0 - mu), 1e-10);
      double z = eta + (targets[i] - mu) / w;
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c <= r; ++c) xtx(r, c) += w * rows[i][r] * rows[i][c];
        xtz[r] += w * rows[i][r] * z;
      }
    }
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = r + 1; c < p; ++c) xtx(r, c) = xtx(c, r);
    std::vector<double> next;
    if (!cholesky_solve(xtx, xtz, next)) {
      for (std::size_t r = 0; r < p; ++r) xtx(r, r) += kRidge;
      if (ridge_used != nullptr) *ridge_used = true;
      if (!cholesky_solve(xtx, xtz, next)) break;
    }
    double delta = 0.0;
    for (std::size_t k = 0; k < p; ++k) delta = std::max(delta, std::abs(next[k] - beta[k]));
    beta = std::move(next);
    if (delta < 1e-10) break;
  }
  return beta;
}

double sigmoid_clamped(double eta) {
  double p = 1.0 / (1.0 + std::exp(-std::clamp(eta, -30.0, 30.0)));
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

}  // namespace

Tensor solve_weighted_least_squares(const std::vector<std::vector<double>>& rows,
                                    std::span<const double> targets,
                                    std::span<const double> weights, bool* ridge_used) {
  if (rows.empty()) throw ContractViolation("weighted LS: empty design");
  std::size_t p = rows[0].size();
  Tensor xtx(p, p);
  std::vector<double> xty(p, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double w = weights[i];
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c <= r; ++c) xtx(r, c) += w * rows[i][r] * rows[i][c];
      xty[r] += w * rows[i][r] * targets[i];
    }
  }
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = r + 1; c < p; ++c) xtx(r, c) = xtx(c, r);
  std::vector<double> beta;
  if (!cholesky_solve(xtx, xty, beta)) {
    for (std::size_t r = 0; r < p; ++r) xtx(r, r) += kRidge;
    if (ridge_used != nullptr) *ridge_used = true;
    if (!cholesky_solve(xtx, xty, beta))
      throw NumericalError("weighted_least_squares");
  }
  Tensor out(p);
  for (std::size_t k = 0; k < p; ++k) out[k] = beta[k];
  return out;
}

MsmModel msm_fit(std::span<const UnitRecord* const> train, double max_step) {
  if (train.empty()) throw ContractViolation("msm_fit: empty training set");
  MsmModel model;
  model.max_step = max_step;
  std::size_t j = train.front()->a.cols();

  // pooled design over all units and grid steps
  std::vector<GridView> grids;
  grids.reserve(train.size());
  for (const UnitRecord* u : train) grids.push_back(carry_to_grid(u->observed(), max_step));

  model.marginal.assign(j, 0.0);
  std::size_t count = 0;
  for (const GridView& g : grids)
    for (std::size_t n = 0; n < g.times.size(); ++n) {
      for (std::size_t c = 0; c < j; ++c) model.marginal[c] += g.a[n][c];
      ++count;
    }
  for (double& m : model.marginal) m /= double(count);

  model.prop_coef = Tensor(j, 2 + j);
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  for (std::size_t c = 0; c < j; ++c) {
    rows.clear();
    targets.clear();
    for (const GridView& g : grids)
      for (std::size_t n = 0; n < g.times.size(); ++n) {
        rows.push_back(prop_features(g, n, j));
        targets.push_back(g.a[n][c]);
      }
    std::vector<double> beta = fit_logistic(rows, targets, &model.ridge_fallback);
    for (std::size_t k = 0; k < beta.size(); ++k) model.prop_coef(c, k) = beta[k];
  }

  // stabilized weights, then weighted outcome regression y_{t+1} ~ [1, xbar, abar]
  rows.clear();
  targets.clear();
  std::vector<double> weights;
  for (const GridView& g : grids) {
    double running = 1.0;
    for (std::size_t n = 0; n + 1 < g.times.size(); ++n) {
      std::vector<double> f = prop_features(g, n, j);
      for (std::size_t c = 0; c < j; ++c) {
        double eta = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) eta += model.prop_coef(c, k) * f[k];
        double p = sigmoid_clamped(eta);
        double cond = g.a[n][c] != 0.0 ? p : 1.0 - p;
        double marg = std::clamp(g.a[n][c] != 0.0 ? model.marginal[c]
                                                  : 1.0 - model.marginal[c],
                                 kProbFloor, 1.0 - kProbFloor);
        running *= marg / cond;
      }
      double sw = std::clamp(running, model.clip_lo, model.clip_hi);
      rows.push_back({1.0, g.xbar[n], g.abar[n]});
      targets.push_back(g.y[n + 1]);
      weights.push_back(sw);
    }
  }
  model.out_coef = solve_weighted_least_squares(rows, targets, weights,
                                                &model.ridge_fallback);
  return model;
}

std::vector<double> msm_weights(const MsmModel& model, const ObservedUnit& unit) {
  GridView g = carry_to_grid(unit, model.max_step);
  std::size_t j = unit.treatment_dim();
  std::vector<double> out;
  double running = 1.0;
  for (std::size_t n = 0; n < g.times.size(); ++n) {
    std::vector<double> f = prop_features(g, n, j);
    for (std::size_t c = 0; c < j; ++c) {
      double eta = 0.0;
      for (std::size_t k = 0; k < f.size(); ++k) eta += model.prop_coef(c, k) * f[k];
      double p = sigmoid_clamped(eta);
      double cond = g.a[n][c] != 0.0 ? p : 1.0 - p;
      double marg = std::clamp(
          g.a[n][c] != 0.0 ? model.marginal[c] : 1.0 - model.marginal[c], kProbFloor,
          1.0 - kProbFloor);
      running *= marg / cond;
    }
    out.push_back(std::clamp(running, model.clip_lo, model.clip_hi));
  }
  return out;
}

double msm_predict(const MsmModel& model, const ObservedUnit& unit, const Tensor& plan) {
  if (plan.rows() != unit.length() || plan.cols() != unit.treatment_dim())
    throw ContractViolation("msm_predict: plan shape mismatch");
  GridView g = carry_to_grid(unit, model.max_step, &plan);
  std::size_t n = g.times.size() - 2;
  return model.out_coef[0] + model.out_coef[1] * g.xbar[n] + model.out_coef[2] * g.abar[n];
}

std::vector<double> msm_predict_factual(const MsmModel& model, const ObservedUnit& unit) {
  GridView g = carry_to_grid(unit, model.max_step);
  std::vector<double> preds;
  for (std::size_t k = 1; k < unit.length(); ++k) {
    std::size_t n = g.obs_index[k] - 1;
    preds.push_back(model.out_coef[0] + model.out_coef[1] * g.xbar[n] +
                    model.out_coef[2] * g.abar[n]);
  }
  return preds;
}

}  // namespace lipscde
