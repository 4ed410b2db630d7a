#pragma once

#include <span>
#include <vector>

#include "lipscde/param.hpp"
#include "lipscde/tape.hpp"
#include "lipscde/tensor.hpp"

namespace lipscde {

/// Per-unit propensities and stabilized inverse-probability weights.
/// probs(k, c) is the model probability of the factual treatment a_{t_k,c}
/// given history before t_k (the marginal at k = 0), floored into
/// (1e-6, 1 - 1e-6). stabilized_weights are cumulative products of
/// marginal / conditional ratios, clipped to [clip_lo, clip_hi];
/// raw_weights keeps the unclipped values.
struct PropensityRecord {
  Tensor probs;
  std::vector<double> raw_weights;
  std::vector<double> stabilized_weights;
};

/// logits[k] are the treatment logits emitted at t_k, predicting a_{t_{k+1}}
/// (so logits.size() == K-1 for K observations).
PropensityRecord propensity(std::span<const Tensor> logits, const Tensor& treatments,
                            std::span<const double> marginal, double clip_lo = 0.1,
                            double clip_hi = 10.0);

/// Weighted mean squared error: sum_k w_k (pred_k - y_k)^2 / sum_k w_k.
double outcome_loss(std::span<const double> preds, std::span<const double> targets,
                    std::span<const double> weights);

struct OutcomeConfig {
  std::size_t latent_dim = 8;
  std::size_t j = 3;
  std::size_t hidden = 8;
};

/// Decodes latent paths into one-step-ahead outcome predictions through two
/// stacked gated recurrent cells that consume [u_hat_k, a_k, dt_k]; the time
/// gap input is how irregular spacing enters.
class OutcomeModel {
 public:
  OutcomeModel(ParamStore& store, const OutcomeConfig& cfg, uint64_t init_seed);

  const OutcomeConfig& config() const { return cfg_; }

  /// latents: K states at observation times; plan: [K x j] treatments
  /// (factual or counterfactual); dt: K gaps (dt_0 = 0). Returns K-1
  /// predictions, pred[k] targeting y_{t_{k+1}}.
  std::vector<Var> decode(Tape& tape, std::span<const Var> latents, const Tensor& plan,
                          std::span<const double> dt) const;

 private:
  OutcomeConfig cfg_;
  std::array<Param*, 9> l1_;
  std::array<Param*, 9> l2_;
  Param* head_w_;
  Param* head_b_;
};

}  // namespace lipscde
