#pragma once

#include <span>
#include <vector>

#include "lipscde/model.hpp"
#include "lipscde/unit.hpp"

namespace lipscde {

struct TrainConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 10;
  int iterations_per_batch = 10;  // consecutive gradient steps per batch
  int batch_size = 16;
  double outcome_weight = 1.0;    // factor loss has weight 1
  uint64_t seed = 0;
};

struct LossEntry {
  int epoch;
  int batch;
  int iteration;  // global iteration index
  double factor;
  double outcome;
  double total;
};

struct TrainResult {
  std::vector<LossEntry> history;
  bool aborted = false;        // NaN loss: parameters rolled back to the last
  long abort_iteration = -1;   // good state and training stopped
};

/// Joint training: loss = mean factor loss + outcome_weight * mean IPTW
/// outcome loss per batch, Adam steps with spectral projections after every
/// step. Deterministic given (config, seed). Sets the model's treatment
/// marginals from the training split.
TrainResult train(LipscdeModel& model, std::span<const UnitRecord* const> units,
                  const TrainConfig& cfg);

/// Stabilized IPTW weights for one unit's outcome terms, from the forward
/// pass's treatment logits. weights[k] covers history through input step k.
std::vector<double> unit_iptw_weights(const LipscdeModel& model,
                                      const PreparedUnit& prep,
                                      const UnitForward& fwd);

struct UnitLossVars {
  Var factor;
  Var outcome;
};

/// One unit's contribution to the training objective. The training loop
/// recomputes IPTW weights each iteration and treats them as constants;
/// passing frozen_weights instead makes the objective a pure function of the
/// parameters, which is what gradient checks differentiate.
UnitLossVars unit_training_loss(Tape& tape, const LipscdeModel& model,
                                const PreparedUnit& prep, uint64_t sample_seed,
                                const std::vector<double>* frozen_weights = nullptr);

/// The training objective evaluated without gradients (validation).
double validation_loss(const LipscdeModel& model,
                       std::span<const UnitRecord* const> units, double outcome_weight,
                       uint64_t seed);

}  // namespace lipscde
