#pragma once

#include <span>
#include <vector>

#include "lipscde/confounder.hpp"
#include "lipscde/param.hpp"
#include "lipscde/scde.hpp"
#include "lipscde/tape.hpp"
#include "lipscde/unit.hpp"

namespace lipscde {

struct LatentConfig {
  std::size_t d = 5;
  std::size_t j = 3;
  std::size_t z_dim = 1;
  std::size_t latent_dim = 8;
  std::size_t brownian_dim = 4;
  double diffusion_scale = 0.05;
  double delta_stability = 0.01;  // A = M - M^T - delta I
  bool learned_init = true;       // u(t_0) from the first observation; else zeros
  double max_step = 1.0 / 29.0;

  std::size_t control_channels() const { return d + j + z_dim; }
  std::size_t obs_channels() const { return d + j; }
};

/// Everything about one unit that does not depend on parameters: solver grid,
/// observed history carried onto it, control increments, band-filter taps.
/// Prepared once and reused across training iterations.
struct PreparedUnit {
  ObservedUnit obs;
  std::vector<double> grid;
  std::vector<std::size_t> obs_to_grid;
  Tensor hist;                             // [Tg x (d+j)], LOCF onto the grid
  std::vector<std::vector<double>> dhist;  // observed-channel increments per step
  CausalBandCache bands;                   // empty when the branch is disabled
  std::vector<double> dt_obs;              // gaps between observations, dt_0 = 0
};

/// One stochastic forward pass of Eq-style latent dynamics for a unit.
struct UnitForward {
  std::vector<Var> z_rows;       // substitute confounders per grid index
  std::vector<Var> grid_states;  // latent state at every grid point
  std::vector<Var> obs_states;   // latent state at observation times
  std::vector<Var> treat_logits; // treatment logits at observation times
};

/// Latent stochastic controlled dynamics: observation embedding, Lipschitz
/// RNN drift/diffusion fields, Euler-Maruyama forward solves, and the factor
/// objective that makes latents predict upcoming treatments.
class LatentModel {
 public:
  LatentModel(ParamStore& store, const LatentConfig& cfg, uint64_t init_seed);

  const LatentConfig& config() const { return cfg_; }

  /// tanh(W [x; a; z] + b): the per-time observation embedding.
  Var embed(Tape& tape, std::span<const double> x_t, std::span<const double> a_t,
            Var z_t) const;

  /// Drift field as the full [l x c] matrix: rank-one broadcast of the
  /// Lipschitz RNN cell output against learned channel weights.
  Var drift_field(Tape& tape, Var u, Var e) const;

  /// Diffusion field [l x w]; same functional form, scaled by diffusion_scale.
  Var diffusion_field(Tape& tape, Var u, Var e) const;

  PreparedUnit prepare(const ObservedUnit& obs, const ConfounderBranch* branch) const;

  /// Forward solve on the prepared grid. The confounder rows come from the
  /// branch's causal evaluation (zeros when branch == nullptr). Reproducible
  /// given sample_seed; with diffusion_scale == 0 the result is seed-free.
  UnitForward forward(Tape& tape, const PreparedUnit& prep,
                      const ConfounderBranch* branch, uint64_t sample_seed) const;

  /// Mean next-treatment binary cross-entropy (strictly one-step-ahead).
  Var factor_loss(Tape& tape, const UnitForward& fwd, const Tensor& treatments) const;

  LatentPath to_latent_path(const PreparedUnit& prep, const UnitForward& fwd) const;

  Param& treat_head_w() { return *treat_w_; }
  Param& treat_head_b() { return *treat_b_; }
  const Param& treat_head_w() const { return *treat_w_; }
  Param& drift_w() { return *w_drift_; }
  Param& drift_u() { return *u_drift_; }
  Param& drift_m() { return *m_drift_; }
  Param& diff_w() { return *w_diff_; }
  Param& diff_u() { return *u_diff_; }
  Param& diff_m() { return *m_diff_; }
  Param& embed_w() { return *embed_w_; }

 private:
  struct FieldParams {
    Param *m, *w, *u, *b, *chan;
  };
  Var cell(Tape& tape, const FieldParams& fp, Var state, Var e) const;
  Var field_matrix(Tape& tape, const FieldParams& fp, Var u, Var e) const;

  LatentConfig cfg_;
  Param* embed_w_;
  Param* embed_b_;
  Param* init_w_;
  Param *m_drift_, *w_drift_, *u_drift_, *b_drift_, *chan_drift_;
  Param *m_diff_, *w_diff_, *u_diff_, *b_diff_, *chan_diff_;
  Param *treat_w_, *treat_b_;
};

}  // namespace lipscde
