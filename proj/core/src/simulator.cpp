#include "lipscde/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "lipscde/errors.hpp"
#include "lipscde/rng.hpp"

namespace lipscde {

namespace {

double rowmean(const Tensor& m, std::size_t row) {
  double s = 0.0;
  for (std::size_t c = 0; c < m.cols(); ++c) s += m(row, c);
  return s / double(m.cols());
}

void attach_plans(const SimConfig& cfg, UnitRecord& rec) {
  std::size_t m = rec.length();
  std::size_t jj = cfg.j;

  // flip_final: invert the treatment policy from the penultimate observation
  // onward, so the final outcome is affected even when interior canonical
  // steps are unobserved
  Tensor flip = rec.a;
  for (std::size_t k = m - 2; k < m; ++k)
    for (std::size_t c = 0; c < jj; ++c) flip(k, c) = 1.0 - flip(k, c);
  Tensor zeros(m, jj);

  rec.cf_plans.clear();
  rec.cf_plans.push_back(CfPlan{kPlanFlipFinal, flip, Tensor(m)});
  rec.cf_plans.push_back(CfPlan{kPlanNeverTreat, zeros, Tensor(m)});
}

}  // namespace

void validate(const SimConfig& cfg) {
  if (cfg.t_steps < 4) throw ContractViolation("SimConfig: t_steps >= 4 required");
  if (cfg.d < 1 || cfg.j < 1) throw ContractViolation("SimConfig: d, j >= 1 required");
  if (cfg.gamma < 0.0 || cfg.gamma > 1.0)
    throw ContractViolation("SimConfig: gamma must be in [0,1]");
  if (cfg.missing_rate < 0.0 || cfg.missing_rate >= 1.0)
    throw ContractViolation("SimConfig: missing_rate must be in [0,1)");
  if (cfg.sigma_z < 0.0 || cfg.sigma_x < 0.0 || cfg.sigma_y < 0.0)
    throw ContractViolation("SimConfig: noise scales must be >= 0");
  if (std::abs(cfg.alpha_z) >= 1.0 || std::abs(cfg.alpha_x) >= 1.0)
    throw ContractViolation("SimConfig: AR coefficients must lie in (-1,1)");
  std::size_t removed = std::size_t(cfg.missing_rate * double(cfg.t_steps));
  if (cfg.t_steps - removed < 4)
    throw ContractViolation("SimConfig: each unit must retain >= 4 observations");
}

UnitRecord simulate_unit(const SimConfig& cfg, uint64_t unit_seed) {
  validate(cfg);
  std::size_t T = cfg.t_steps, d = cfg.d, jj = cfg.j;

  UnitRecord rec;
  rec.unit_seed = unit_seed;
  rec.timestamps.resize(T);
  rec.x = Tensor(T, d);
  rec.a = Tensor(T, jj);
  rec.y = Tensor(T);
  rec.z_true = Tensor(T, std::size_t(1));

  double z = cfg.init_scale * rng_normal(unit_seed, Stream::kSimInit, 0);
  for (std::size_t c = 0; c < d; ++c)
    rec.x(0, c) = cfg.init_scale * rng_normal(unit_seed, Stream::kSimInit, 1 + c);

  for (std::size_t t = 0; t < T; ++t) {
    rec.timestamps[t] = cfg.timestamp(t);
    rec.z_true(t, 0) = z;

    double xbar = rowmean(rec.x, t);
    double logit = kTreatSharpness *
                   (cfg.gamma * cfg.w_z * z + (1.0 - cfg.gamma) * cfg.w_x * xbar);
    double p = 1.0 / (1.0 + std::exp(-logit));
    for (std::size_t c = 0; c < jj; ++c)
      rec.a(t, c) = rng_uniform(unit_seed, Stream::kSimTreatment, t, c) < p ? 1.0 : 0.0;

    if (t == 0) {
      rec.y[0] = cfg.sigma_y * rng_normal(unit_seed, Stream::kSimOutcome, 0);
    }
    if (t + 1 < T) {
      double abar = rowmean(rec.a, t);
      rec.y[t + 1] = cfg.beta_a * abar + cfg.beta_x * xbar + cfg.gamma_y * z +
                     cfg.sigma_y * rng_normal(unit_seed, Stream::kSimOutcome, t + 1);
      for (std::size_t c = 0; c < d; ++c)
        rec.x(t + 1, c) = cfg.alpha_x * rec.x(t, c) + cfg.c_z * z +
                          cfg.sigma_x * rng_normal(unit_seed, Stream::kSimCovariate, t, c);
      z = cfg.alpha_z * z + cfg.sigma_z * rng_normal(unit_seed, Stream::kSimConfounder, t);
    }
  }

  attach_plans(cfg, rec);
  for (CfPlan& plan : rec.cf_plans)
    plan.y_cf = counterfactual_outcomes(cfg, rec.a, rec.y, plan.treatments);
  return rec;
}

Tensor counterfactual_outcomes(const SimConfig& cfg, const Tensor& factual_a,
                               const Tensor& factual_y, const Tensor& plan_a) {
  if (!plan_a.same_shape(factual_a))
    throw ContractViolation("counterfactual_outcomes: plan shape mismatch");
  std::size_t m = factual_y.size();
  Tensor y = factual_y;
  for (std::size_t t = 0; t + 1 < m; ++t)
    y[t + 1] += cfg.beta_a * (rowmean(plan_a, t) - rowmean(factual_a, t));
  return y;
}

UnitRecord apply_missingness(const SimConfig& cfg, const UnitRecord& full, double rate,
                             uint64_t seed) {
  std::size_t m = full.length();
  if (rate == 0.0) return full;
  if (rate < 0.0 || rate >= 1.0)
    throw ContractViolation("apply_missingness: rate must be in [0,1)");
  auto remove = std::size_t(rate * double(m));
  if (m - remove < 4)
    throw ContractViolation("apply_missingness: fewer than 4 points would remain");

  // seeded partial Fisher-Yates over interior indices 1..m-2
  std::vector<std::size_t> interior(m - 2);
  for (std::size_t i = 0; i < interior.size(); ++i) interior[i] = i + 1;
  uint64_t key = full.unit_seed ^ seed;
  for (std::size_t i = 0; i < remove; ++i) {
    std::size_t span = interior.size() - i;
    std::size_t pick = i + std::size_t(rng_u64(key, Stream::kMissingness, i) % span);
    std::swap(interior[i], interior[pick]);
  }
  std::vector<bool> drop(m, false);
  for (std::size_t i = 0; i < remove; ++i) drop[interior[i]] = true;

  UnitRecord out;
  out.unit_id = full.unit_id;
  out.unit_seed = full.unit_seed;
  std::size_t keep = m - remove;
  out.timestamps.reserve(keep);
  out.x = Tensor(keep, full.x.cols());
  out.a = Tensor(keep, full.a.cols());
  out.y = Tensor(keep);
  out.z_true = Tensor(keep, std::size_t(1));
  std::vector<std::size_t> kept_idx;
  kept_idx.reserve(keep);
  for (std::size_t t = 0; t < m; ++t) {
    if (drop[t]) continue;
    std::size_t r = out.timestamps.size();
    out.timestamps.push_back(full.timestamps[t]);
    for (std::size_t c = 0; c < full.x.cols(); ++c) out.x(r, c) = full.x(t, c);
    for (std::size_t c = 0; c < full.a.cols(); ++c) out.a(r, c) = full.a(t, c);
    out.y[r] = full.y[t];
    out.z_true(r, 0) = full.z_true(t, 0);
    kept_idx.push_back(t);
  }

  // re-derive the stored plans on the retained timeline: interventions are
  // defined at observed times and held (the canonical process keeps the
  // factual treatments at hidden times except where the plan overrides them)
  std::size_t flip_from = kept_idx[keep - 2];  // penultimate retained canonical step
  Tensor flip_full = full.a;
  for (std::size_t t = flip_from; t < m; ++t)
    for (std::size_t c = 0; c < full.a.cols(); ++c)
      flip_full(t, c) = 1.0 - flip_full(t, c);
  Tensor zeros_full(m, full.a.cols());

  out.cf_plans.clear();
  for (const auto& [name, plan_full] :
       std::initializer_list<std::pair<const char*, const Tensor*>>{
           {kPlanFlipFinal, &flip_full}, {kPlanNeverTreat, &zeros_full}}) {
    Tensor ycf_full = counterfactual_outcomes(cfg, full.a, full.y, *plan_full);
    CfPlan plan;
    plan.name = name;
    plan.treatments = Tensor(keep, full.a.cols());
    plan.y_cf = Tensor(keep);
    for (std::size_t r = 0; r < keep; ++r) {
      std::size_t t = kept_idx[r];
      for (std::size_t c = 0; c < full.a.cols(); ++c)
        plan.treatments(r, c) = (*plan_full)(t, c);
      plan.y_cf[r] = ycf_full[t];
    }
    out.cf_plans.push_back(std::move(plan));
  }
  return out;
}

std::vector<const UnitRecord*> Dataset::split(const std::vector<int64_t>& ids) const {
  std::unordered_map<int64_t, const UnitRecord*> by_id;
  for (const UnitRecord& u : units) by_id.emplace(u.unit_id, &u);
  std::vector<const UnitRecord*> out;
  out.reserve(ids.size());
  for (int64_t id : ids) out.push_back(by_id.at(id));
  return out;
}

Dataset generate_dataset(const SimConfig& cfg) {
  validate(cfg);
  Dataset ds;
  ds.manifest.config = cfg;
  ds.units.reserve(cfg.n_units);
  for (std::size_t i = 0; i < cfg.n_units; ++i) {
    uint64_t unit_seed = rng_u64(cfg.seed, Stream::kSimInit, 1000003 + i);
    UnitRecord rec = simulate_unit(cfg, unit_seed);
    rec.unit_id = int64_t(i);
    if (cfg.missing_rate > 0.0)
      rec = apply_missingness(cfg, rec, cfg.missing_rate,
                              rng_u64(cfg.seed, Stream::kMissingness, i));
    rec.unit_id = int64_t(i);
    ds.units.push_back(std::move(rec));
  }

  // seeded permutation, then 80/10/10 slices
  std::vector<int64_t> order(cfg.n_units);
  for (std::size_t i = 0; i < cfg.n_units; ++i) order[i] = int64_t(i);
  for (std::size_t i = 0; i + 1 < cfg.n_units; ++i) {
    std::size_t span = cfg.n_units - i;
    std::size_t pick = i + std::size_t(rng_u64(cfg.seed, Stream::kShuffle, i) % span);
    std::swap(order[i], order[pick]);
  }
  auto n_train = std::size_t(0.8 * double(cfg.n_units));
  auto n_val = std::size_t(0.1 * double(cfg.n_units));
  ds.manifest.train_ids.assign(order.begin(), order.begin() + long(n_train));
  ds.manifest.val_ids.assign(order.begin() + long(n_train),
                             order.begin() + long(n_train + n_val));
  ds.manifest.test_ids.assign(order.begin() + long(n_train + n_val), order.end());
  return ds;
}

}  // namespace lipscde
