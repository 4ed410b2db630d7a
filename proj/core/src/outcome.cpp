#include "lipscde/outcome.hpp"

#include <algorithm>
#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/rng.hpp"

namespace lipscde {

namespace {
constexpr double kProbFloor = 1e-6;

double clamp_prob(double p) {
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

Tensor init_matrix(std::size_t r, std::size_t c, double scale, uint64_t seed, uint64_t tag) {
  Tensor m(r, c);
  double s = scale / std::sqrt(double(c));
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = s * rng_normal(seed, Stream::kParamInit, tag, i);
  return m;
}
}  // namespace

PropensityRecord propensity(std::span<const Tensor> logits, const Tensor& treatments,
                            std::span<const double> marginal, double clip_lo,
                            double clip_hi) {
  std::size_t k = treatments.rows(), j = treatments.cols();
  if (k == 0) throw ContractViolation("propensity: empty path");
  if (logits.size() + 1 != k)
    throw ContractViolation("propensity: need K-1 logit vectors for K observations");
  if (marginal.size() != j) throw ContractViolation("propensity: marginal size mismatch");

  PropensityRecord rec;
  rec.probs = Tensor(k, j);
  rec.raw_weights.resize(k);
  rec.stabilized_weights.resize(k);

  double running = 1.0;
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t c = 0; c < j; ++c) {
      bool treated = treatments(s, c) != 0.0;
      double marg = clamp_prob(treated ? marginal[c] : 1.0 - marginal[c]);
      double cond;
      if (s == 0) {
        cond = marg;  // no history yet: conditional equals the marginal
      } else {
        double p = 1.0 / (1.0 + std::exp(-logits[s - 1][c]));
        cond = clamp_prob(treated ? p : 1.0 - p);
      }
      rec.probs(s, c) = cond;
      running *= marg / cond;
    }
    rec.raw_weights[s] = running;
    rec.stabilized_weights[s] = std::clamp(running, clip_lo, clip_hi);
  }
  return rec;
}

double outcome_loss(std::span<const double> preds, std::span<const double> targets,
                    std::span<const double> weights) {
  if (preds.size() != targets.size() || preds.size() != weights.size())
    throw ContractViolation("outcome_loss: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - targets[i];
    num += weights[i] * d * d;
    den += weights[i];
  }
  if (den <= 0.0) throw ContractViolation("outcome_loss: all-zero weights");
  return num / den;
}

OutcomeModel::OutcomeModel(ParamStore& store, const OutcomeConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
  std::size_t h = cfg.hidden;
  std::size_t in1 = cfg.latent_dim + cfg.j + 1;
  const char* gate[3] = {"z", "r", "h"};
  for (int g = 0; g < 3; ++g) {
    l1_[std::size_t(3 * g + 0)] = &store.add(
        std::string("outcome.l1.w") + gate[g],
        init_matrix(h, in1, 0.8, init_seed, 301 + uint64_t(10 * g)));
    l1_[std::size_t(3 * g + 1)] = &store.add(
        std::string("outcome.l1.u") + gate[g],
        init_matrix(h, h, 0.8, init_seed, 302 + uint64_t(10 * g)));
    l1_[std::size_t(3 * g + 2)] =
        &store.add(std::string("outcome.l1.b") + gate[g], Tensor(h));
    l2_[std::size_t(3 * g + 0)] = &store.add(
        std::string("outcome.l2.w") + gate[g],
        init_matrix(h, h, 0.8, init_seed, 331 + uint64_t(10 * g)));
    l2_[std::size_t(3 * g + 1)] = &store.add(
        std::string("outcome.l2.u") + gate[g],
        init_matrix(h, h, 0.8, init_seed, 332 + uint64_t(10 * g)));
    l2_[std::size_t(3 * g + 2)] =
        &store.add(std::string("outcome.l2.b") + gate[g], Tensor(h));
  }
  Tensor hw(h);
  for (std::size_t i = 0; i < h; ++i)
    hw[i] = 0.5 / std::sqrt(double(h)) * rng_normal(init_seed, Stream::kParamInit, 361, i);
  head_w_ = &store.add("outcome.head_w", std::move(hw));
  head_b_ = &store.add("outcome.head_b", Tensor(std::size_t(1)));
}

std::vector<Var> OutcomeModel::decode(Tape& tape, std::span<const Var> latents,
                                      const Tensor& plan,
                                      std::span<const double> dt) const {
  std::size_t k = latents.size();
  if (k < 2) throw ContractViolation("decode: need >= 2 observation times");
  if (plan.rank() != 2 || plan.rows() != k || plan.cols() != cfg_.j)
    throw ContractViolation("decode: plan length mismatch");
  if (dt.size() != k) throw ContractViolation("decode: dt length mismatch");

  std::array<Var, 9> w1, w2;
  for (int i = 0; i < 9; ++i) {
    w1[std::size_t(i)] = tape.param(*l1_[std::size_t(i)]);
    w2[std::size_t(i)] = tape.param(*l2_[std::size_t(i)]);
  }
  Var hw = tape.param(*head_w_);
  Var hb = tape.param(*head_b_);

  Var h1 = tape.constant(Tensor(cfg_.hidden));
  Var h2 = tape.constant(Tensor(cfg_.hidden));
  std::vector<Var> preds;
  preds.reserve(k - 1);
  std::vector<double> tail(cfg_.j + 1);
  for (std::size_t s = 0; s + 1 < k; ++s) {
    for (std::size_t c = 0; c < cfg_.j; ++c) tail[c] = plan(s, c);
    tail[cfg_.j] = dt[s];
    h1 = tape.gru_cell(std::span<const Var, 9>(w1), h1, latents[s], tail);
    h2 = tape.gru_cell(std::span<const Var, 9>(w2), h2, h1, {});
    preds.push_back(tape.affine_scalar(hw, hb, h2));
  }
  return preds;
}

}  // namespace lipscde
