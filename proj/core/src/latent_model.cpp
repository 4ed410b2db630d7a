#include "lipscde/latent_model.hpp"

#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/rng.hpp"

namespace lipscde {

namespace {

Tensor init_matrix(std::size_t r, std::size_t c, double scale, uint64_t seed, uint64_t tag) {
  Tensor m(r, c);
  double s = scale / std::sqrt(double(c));
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = s * rng_normal(seed, Stream::kParamInit, tag, i);
  return m;
}

Tensor init_vector(std::size_t n, double scale, uint64_t seed, uint64_t tag) {
  Tensor v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = scale * rng_normal(seed, Stream::kParamInit, tag, i);
  return v;
}

}  // namespace

LatentModel::LatentModel(ParamStore& store, const LatentConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
  if (cfg.latent_dim < 1) throw ContractViolation("LatentModel: latent_dim >= 1");
  std::size_t l = cfg.latent_dim;
  std::size_t nin = cfg.control_channels();
  embed_w_ = &store.add("latent.embed_w", init_matrix(l, nin, 0.8, init_seed, 201));
  embed_b_ = &store.add("latent.embed_b", Tensor(l));
  init_w_ = &store.add("latent.init_w", init_matrix(l, nin, 0.5, init_seed, 202));

  auto add_field = [&](const char* prefix, uint64_t tag, Param*& m, Param*& w,
                       Param*& u, Param*& b, Param*& chan, std::size_t chan_dim) {
    m = &store.add(std::string(prefix) + ".m", init_matrix(l, l, 0.3, init_seed, tag));
    w = &store.add(std::string(prefix) + ".w", init_matrix(l, l, 0.9, init_seed, tag + 1),
                   Projection::kSpectral, 1.0);
    u = &store.add(std::string(prefix) + ".u", init_matrix(l, l, 0.9, init_seed, tag + 2),
                   Projection::kSpectral, 1.0);
    b = &store.add(std::string(prefix) + ".b", Tensor(l));
    chan = &store.add(std::string(prefix) + ".chan",
                      init_vector(chan_dim, 0.5, init_seed, tag + 3));
  };
  add_field("latent.drift", 210, m_drift_, w_drift_, u_drift_, b_drift_, chan_drift_,
            cfg.control_channels());
  add_field("latent.diff", 220, m_diff_, w_diff_, u_diff_, b_diff_, chan_diff_,
            cfg.brownian_dim);

  treat_w_ = &store.add("latent.treat_w", init_matrix(cfg.j, l, 0.5, init_seed, 230));
  treat_b_ = &store.add("latent.treat_b", Tensor(cfg.j));
}

Var LatentModel::embed(Tape& tape, std::span<const double> x_t,
                       std::span<const double> a_t, Var z_t) const {
  if (x_t.size() != cfg_.d || a_t.size() != cfg_.j ||
      z_t.value().size() != cfg_.z_dim)
    throw ContractViolation("embed: dimension mismatch");
  std::vector<double> hist(x_t.begin(), x_t.end());
  hist.insert(hist.end(), a_t.begin(), a_t.end());
  return tape.embed_step(tape.param(*embed_w_), tape.param(*embed_b_), z_t, hist);
}

Var LatentModel::cell(Tape& tape, const FieldParams& fp, Var state, Var e) const {
  return tape.lip_cell(tape.param(*fp.m), tape.param(*fp.w), tape.param(*fp.u),
                       tape.param(*fp.b), state, e, cfg_.delta_stability);
}

Var LatentModel::field_matrix(Tape& tape, const FieldParams& fp, Var u, Var e) const {
  // elementary-op composition of the same cell: A u + tanh(W u + U e + b),
  // broadcast against the channel weights
  Var a = tape.skew_shift(tape.param(*fp.m), cfg_.delta_stability);
  Var lin = tape.matvec(a, u);
  Var pre = tape.add(tape.add(tape.matvec(tape.param(*fp.w), u),
                              tape.matvec(tape.param(*fp.u), e)),
                     tape.param(*fp.b));
  Var v = tape.add(lin, tape.tanh(pre));
  return tape.outer(v, tape.param(*fp.chan));
}

Var LatentModel::drift_field(Tape& tape, Var u, Var e) const {
  FieldParams fp{m_drift_, w_drift_, u_drift_, b_drift_, chan_drift_};
  return field_matrix(tape, fp, u, e);
}

Var LatentModel::diffusion_field(Tape& tape, Var u, Var e) const {
  FieldParams fp{m_diff_, w_diff_, u_diff_, b_diff_, chan_diff_};
  return tape.scale(field_matrix(tape, fp, u, e), cfg_.diffusion_scale);
}

PreparedUnit LatentModel::prepare(const ObservedUnit& obs,
                                  const ConfounderBranch* branch) const {
  if (obs.length() < 2) throw ContractViolation("prepare: need >= 2 observations");
  if (obs.covariate_dim() != cfg_.d || obs.treatment_dim() != cfg_.j)
    throw ContractViolation("prepare: dimension mismatch with config");

  PreparedUnit prep;
  prep.obs = obs;
  prep.grid = make_solver_grid(*obs.timestamps, cfg_.max_step);

  std::size_t tg = prep.grid.size();
  std::size_t ch = cfg_.obs_channels();
  prep.hist = Tensor(tg, ch);
  prep.obs_to_grid.resize(obs.length());
  std::size_t oi = 0;
  for (std::size_t n = 0; n < tg; ++n) {
    // latest observation at or before this grid time (grid contains all
    // observation times exactly)
    while (oi + 1 < obs.length() && (*obs.timestamps)[oi + 1] <= prep.grid[n]) ++oi;
    if ((*obs.timestamps)[oi] == prep.grid[n]) prep.obs_to_grid[oi] = n;
    for (std::size_t c = 0; c < cfg_.d; ++c) prep.hist(n, c) = (*obs.x)(oi, c);
    for (std::size_t c = 0; c < cfg_.j; ++c)
      prep.hist(n, cfg_.d + c) = (*obs.a)(oi, c);
  }
  prep.obs_to_grid[0] = 0;

  prep.dhist.resize(tg - 1);
  for (std::size_t n = 0; n + 1 < tg; ++n) {
    prep.dhist[n].resize(ch);
    for (std::size_t c = 0; c < ch; ++c)
      prep.dhist[n][c] = prep.hist(n + 1, c) - prep.hist(n, c);
  }

  if (branch != nullptr) prep.bands = branch->prepare_causal_bands(prep.hist);

  prep.dt_obs.resize(obs.length());
  prep.dt_obs[0] = 0.0;
  for (std::size_t k = 1; k < obs.length(); ++k)
    prep.dt_obs[k] = (*obs.timestamps)[k] - (*obs.timestamps)[k - 1];
  return prep;
}

UnitForward LatentModel::forward(Tape& tape, const PreparedUnit& prep,
                                 const ConfounderBranch* branch,
                                 uint64_t sample_seed) const {
  std::size_t tg = prep.grid.size();
  std::size_t l = cfg_.latent_dim;
  UnitForward fwd;

  if (branch != nullptr) {
    fwd.z_rows = branch->causal_from_cache(tape, prep.bands);
  } else {
    Var zero = tape.constant(Tensor(cfg_.z_dim));
    fwd.z_rows.assign(tg, zero);
  }

  // observation embeddings on the grid
  Var wb = tape.param(*embed_w_);
  Var bb = tape.param(*embed_b_);
  std::vector<Var> embeds;
  embeds.reserve(tg);
  std::vector<double> hist_row(cfg_.obs_channels());
  for (std::size_t n = 0; n < tg; ++n) {
    for (std::size_t c = 0; c < hist_row.size(); ++c) hist_row[c] = prep.hist(n, c);
    embeds.push_back(tape.embed_step(wb, bb, fwd.z_rows[n], hist_row));
  }

  // initial latent state
  Var u0;
  if (cfg_.learned_init) {
    for (std::size_t c = 0; c < hist_row.size(); ++c) hist_row[c] = prep.hist(0, c);
    std::array<Var, 2> parts{tape.constant(Tensor::from(
                                 std::vector<double>(hist_row.begin(), hist_row.end()))),
                             fwd.z_rows[0]};
    u0 = tape.matvec(tape.param(*init_w_), tape.concat(parts));
  } else {
    u0 = tape.constant(Tensor(l));
  }

  bool noisy = cfg_.diffusion_scale != 0.0;
  BrownianDriver driver(sample_seed, cfg_.brownian_dim);

  Var wc = tape.param(*chan_drift_);
  Var ww = noisy ? tape.param(*chan_diff_) : Var{};
  FieldParams drift{m_drift_, w_drift_, u_drift_, b_drift_, chan_drift_};
  FieldParams diff{m_diff_, w_diff_, u_diff_, b_diff_, chan_diff_};

  fwd.grid_states = solve_scde_tape(prep.grid, u0, [&](Var u, std::size_t n) {
    Var s = tape.control_contract(wc, fwd.z_rows[n], fwd.z_rows[n + 1], prep.dhist[n]);
    Var v = cell(tape, drift, u, embeds[n]);
    if (!noisy) return tape.euler_step(u, v, s);
    Tensor dw = driver.increment(n, prep.grid[n + 1] - prep.grid[n]);
    Var sg = tape.dot(ww, tape.constant(std::move(dw)));
    Var vg = cell(tape, diff, u, embeds[n]);
    return tape.euler_step_noise(u, v, s, vg, sg, cfg_.diffusion_scale);
  });

  // latents and treatment logits at observation times
  Var tw = tape.param(*treat_w_);
  Var tb = tape.param(*treat_b_);
  fwd.obs_states.reserve(prep.obs_to_grid.size());
  fwd.treat_logits.reserve(prep.obs_to_grid.size());
  for (std::size_t gi : prep.obs_to_grid) {
    Var u = fwd.grid_states[gi];
    fwd.obs_states.push_back(u);
    fwd.treat_logits.push_back(tape.affine(tw, u, tb));
  }
  return fwd;
}

Var LatentModel::factor_loss(Tape& tape, const UnitForward& fwd,
                             const Tensor& treatments) const {
  std::size_t k = fwd.obs_states.size();
  if (treatments.rank() != 2 || treatments.rows() != k || treatments.cols() != cfg_.j)
    throw ContractViolation("factor_loss: treatments must be [K x j]");
  for (double v : treatments.values())
    if (v != 0.0 && v != 1.0)
      throw ContractViolation("factor_loss: treatments must be binary");
  if (k < 2) throw ContractViolation("factor_loss: need >= 2 observations");

  std::vector<Var> terms;
  terms.reserve(k - 1);
  Tensor target(cfg_.j);
  for (std::size_t s = 0; s + 1 < k; ++s) {
    for (std::size_t c = 0; c < cfg_.j; ++c) target[c] = treatments(s + 1, c);
    terms.push_back(tape.bce_logits(fwd.treat_logits[s], target));
  }
  return tape.mean_many(terms);
}

LatentPath LatentModel::to_latent_path(const PreparedUnit& prep,
                                       const UnitForward& fwd) const {
  LatentPath path;
  path.times = *prep.obs.timestamps;
  path.states = Tensor(fwd.obs_states.size(), cfg_.latent_dim);
  for (std::size_t k = 0; k < fwd.obs_states.size(); ++k) {
    const Tensor& v = fwd.obs_states[k].value();
    for (std::size_t c = 0; c < cfg_.latent_dim; ++c) path.states(k, c) = v[c];
  }
  return path;
}

}  // namespace lipscde
