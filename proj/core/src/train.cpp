#include "lipscde/train.hpp"

#include <cmath>

#include "lipscde/adam.hpp"
#include "lipscde/errors.hpp"
#include "lipscde/outcome.hpp"
#include "lipscde/rng.hpp"

namespace lipscde {

namespace {

std::vector<double> treatment_marginals(std::span<const UnitRecord* const> units,
                                        std::size_t j) {
  std::vector<double> marg(j, 0.0);
  std::size_t count = 0;
  for (const UnitRecord* u : units) {
    for (std::size_t k = 0; k < u->length(); ++k)
      for (std::size_t c = 0; c < j; ++c) marg[c] += u->a(k, c);
    count += u->length();
  }
  for (double& m : marg) m /= double(count);
  return marg;
}

}  // namespace

std::vector<double> unit_iptw_weights(const LipscdeModel& model,
                                      const PreparedUnit& prep,
                                      const UnitForward& fwd) {
  const ObservedUnit& obs = prep.obs;
  std::size_t k = obs.length();
  std::vector<Tensor> logit_values;
  logit_values.reserve(k - 1);
  for (std::size_t s = 0; s + 1 < k; ++s)
    logit_values.push_back(fwd.treat_logits[s].value());
  PropensityRecord prop = propensity(logit_values, *obs.a, model.treatment_marginals());
  // weights[k] covers history through the input step of prediction k
  prop.stabilized_weights.resize(k - 1);
  return prop.stabilized_weights;
}

UnitLossVars unit_training_loss(Tape& tape, const LipscdeModel& model,
                                const PreparedUnit& prep, uint64_t sample_seed,
                                const std::vector<double>* frozen_weights) {
  const ObservedUnit& obs = prep.obs;
  UnitForward fwd = model.forward_unit(tape, prep, sample_seed);

  UnitLossVars out;
  out.factor = model.latent().factor_loss(tape, fwd, *obs.a);

  std::size_t k = obs.length();
  std::vector<double> weights =
      frozen_weights != nullptr ? *frozen_weights : unit_iptw_weights(model, prep, fwd);
  std::vector<Var> preds =
      model.outcome().decode(tape, fwd.obs_states, *obs.a, prep.dt_obs);
  std::vector<double> targets(k - 1);
  for (std::size_t s = 0; s + 1 < k; ++s) targets[s] = (*obs.y)[s + 1];
  out.outcome = tape.weighted_sq_err_mean(preds, targets, weights);
  return out;
}

TrainResult train(LipscdeModel& model, std::span<const UnitRecord* const> units,
                  const TrainConfig& cfg) {
  if (units.empty()) throw ContractViolation("train: empty training set");
  model.set_treatment_marginals(treatment_marginals(units, model.config().j));

  std::vector<PreparedUnit> prepared;
  prepared.reserve(units.size());
  for (const UnitRecord* u : units) prepared.push_back(model.prepare(u->observed()));

  Adam::Config acfg;
  acfg.lr = cfg.lr;
  acfg.beta1 = cfg.beta1;
  acfg.beta2 = cfg.beta2;
  acfg.eps = cfg.eps;
  Adam adam(model.params(), acfg);

  TrainResult result;
  Tape tape;
  std::vector<Tensor> snapshot;
  snapshot.reserve(model.params().size());

  long global_iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // seeded shuffle of unit order, new each epoch
    std::vector<std::size_t> order(units.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::size_t span = order.size() - i;
      std::size_t pick =
          i + std::size_t(rng_u64(cfg.seed, Stream::kShuffle, uint64_t(epoch), i) % span);
      std::swap(order[i], order[pick]);
    }

    std::size_t n_batches =
        (units.size() + std::size_t(cfg.batch_size) - 1) / std::size_t(cfg.batch_size);
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t lo = b * std::size_t(cfg.batch_size);
      std::size_t hi = std::min(units.size(), lo + std::size_t(cfg.batch_size));
      for (int it = 0; it < cfg.iterations_per_batch; ++it) {
        snapshot.clear();
        for (const Param& p : model.params()) snapshot.push_back(p.value);

        bool failed = false;
        double factor_v = 0.0, outcome_v = 0.0, total_v = 0.0;
        try {
          tape.clear();
          std::vector<Var> fls, ols;
          fls.reserve(hi - lo);
          ols.reserve(hi - lo);
          for (std::size_t ui = lo; ui < hi; ++ui) {
            const PreparedUnit& prep = prepared[order[ui]];
            uint64_t sample_seed =
                rng_u64(cfg.seed, Stream::kSdeSample,
                        uint64_t(prep.obs.unit_id), uint64_t(global_iter));
            UnitLossVars ul = unit_training_loss(tape, model, prep, sample_seed);
            fls.push_back(ul.factor);
            ols.push_back(ul.outcome);
          }
          Var factor_mean = tape.mean_many(fls);
          Var outcome_mean = tape.mean_many(ols);
          Var total = tape.add(factor_mean, tape.scale(outcome_mean, cfg.outcome_weight));
          factor_v = factor_mean.value().scalar_value();
          outcome_v = outcome_mean.value().scalar_value();
          total_v = total.value().scalar_value();
          if (!std::isfinite(total_v)) throw NumericalError("train_loss");

          model.params().zero_grad();
          tape.backward(total);
          adam.step();
        } catch (const NumericalError&) {
          failed = true;
        }

        if (failed) {
          // roll back to the last good parameters and stop
          for (std::size_t i = 0; i < model.params().size(); ++i)
            model.params()[i].value = snapshot[i];
          result.aborted = true;
          result.abort_iteration = global_iter;
          return result;
        }

        result.history.push_back(LossEntry{epoch, int(b), int(global_iter), factor_v,
                                           outcome_v, total_v});
        ++global_iter;
      }
    }
  }
  return result;
}

double validation_loss(const LipscdeModel& model,
                       std::span<const UnitRecord* const> units, double outcome_weight,
                       uint64_t seed) {
  if (units.empty()) throw ContractViolation("validation_loss: empty set");
  Tape tape;
  double facc = 0.0, oacc = 0.0;
  for (const UnitRecord* u : units) {
    tape.clear();
    PreparedUnit prep = model.prepare(u->observed());
    uint64_t sample_seed = rng_u64(seed, Stream::kSdeSample, uint64_t(u->unit_id), 0);
    UnitLossVars ul = unit_training_loss(tape, model, prep, sample_seed);
    facc += ul.factor.value().scalar_value();
    oacc += ul.outcome.value().scalar_value();
  }
  return facc / double(units.size()) + outcome_weight * oacc / double(units.size());
}

}  // namespace lipscde
