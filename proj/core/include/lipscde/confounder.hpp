#pragma once

#include <numbers>
#include <vector>

#include "lipscde/param.hpp"
#include "lipscde/tape.hpp"
#include "lipscde/tensor.hpp"

namespace lipscde {

/// Hidden-confounder branch configuration. sigma_f defaults to a quarter of
/// the Nyquist frequency (pi rad/sample).
struct ConfounderConfig {
  std::size_t in_channels = 8;  // d + j
  std::size_t conv_channels = 4;
  std::size_t kernel_width = 5;
  std::size_t mlp_hidden = 8;
  std::size_t z_dim = 1;
  double sigma_f = std::numbers::pi / 4.0;
  std::size_t causal_window = 16;
  int proj_len = 32;  // canonical length for the conv operator projection
};

/// Precomputed constant inputs for the causal (trailing-window) evaluation:
/// per time index, the band-filtered history rows each Lipschitz convolution
/// taps into. History is observed data, so none of this needs gradients.
struct CausalBandCache {
  // per index n >= 1: kernel_width * in_channels values per band
  std::vector<std::vector<double>> low_taps;
  std::vector<std::vector<double>> high_taps;
  std::size_t length = 0;
};

/// Infers substitute hidden confounders z_t from observed history by
/// frequency decomposition (Gaussian low/high masks), Lipschitz-constrained
/// convolution per band, and a bias-free Lipschitz MLP. Every trainable
/// piece is 1-Lipschitz after projection, so the whole map from history to
/// each output slice is non-expansive.
class ConfounderBranch {
 public:
  ConfounderBranch(ParamStore& store, const ConfounderConfig& cfg, uint64_t init_seed);

  const ConfounderConfig& config() const { return cfg_; }

  /// Full-history inference: history [T x in_channels] -> rows z_t, T of them.
  /// T >= 2 required.
  std::vector<Var> infer_rows(Tape& tape, const Tensor& history) const;

  /// Same, values only.
  Tensor infer_values(const Tensor& history) const;

  /// Causal mode: row n is inferred from a trailing window of the history
  /// ending at n (z_0 = 0: no history yet). Mutating history after time n
  /// cannot change rows <= n.
  std::vector<Var> infer_causal(Tape& tape, const Tensor& history) const;

  CausalBandCache prepare_causal_bands(const Tensor& history) const;
  std::vector<Var> causal_from_cache(Tape& tape, const CausalBandCache& cache) const;

  Param& conv_low() { return *conv_low_; }
  Param& conv_high() { return *conv_high_; }
  Param& mlp_w1() { return *w1_; }
  Param& mlp_w2() { return *w2_; }
  const Param& conv_low() const { return *conv_low_; }
  const Param& conv_high() const { return *conv_high_; }
  const Param& mlp_w1() const { return *w1_; }
  const Param& mlp_w2() const { return *w2_; }

 private:
  Var mlp_tail(Tape& tape, Var low_feat, Var high_feat) const;

  ConfounderConfig cfg_;
  Param* conv_low_;
  Param* conv_high_;
  Param* w1_;
  Param* w2_;
};

/// Parseval band energies of a multichannel history under the Gaussian masks.
struct BandEnergy {
  double low = 0.0;
  double high = 0.0;
  double total = 0.0;
  double low_fraction = 0.0;
  double high_fraction = 0.0;
};

/// Diagnostic used to choose sigma_f: how much spectral energy each band
/// keeps. Masks partition amplitude, not energy, so fractions need not sum
/// to one.
BandEnergy band_energy_split(const Tensor& history, double sigma_f);

}  // namespace lipscde
