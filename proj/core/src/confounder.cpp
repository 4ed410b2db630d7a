#include "lipscde/confounder.hpp"

#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/fourier.hpp"
#include "lipscde/rng.hpp"

namespace lipscde {

namespace {

Tensor init_kernel(std::size_t co, std::size_t ci, std::size_t kw, uint64_t seed,
                   uint64_t tag) {
  Tensor k(co, ci, kw);
  double s = 0.4 / std::sqrt(double(ci * kw));
  for (std::size_t i = 0; i < k.size(); ++i)
    k[i] = s * rng_normal(seed, Stream::kParamInit, tag, i);
  return k;
}

Tensor init_matrix(std::size_t r, std::size_t c, uint64_t seed, uint64_t tag) {
  Tensor m(r, c);
  double s = 0.8 / std::sqrt(double(c));
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = s * rng_normal(seed, Stream::kParamInit, tag, i);
  return m;
}

}  // namespace

ConfounderBranch::ConfounderBranch(ParamStore& store, const ConfounderConfig& cfg,
                                   uint64_t init_seed)
    : cfg_(cfg) {
  if (cfg.z_dim < 1) throw ContractViolation("ConfounderBranch: z_dim >= 1 required");
  if (cfg.sigma_f <= 0.0) throw ContractViolation("ConfounderBranch: sigma_f > 0 required");
  conv_low_ = &store.add("confounder.conv_low",
                         init_kernel(cfg.conv_channels, cfg.in_channels,
                                     cfg.kernel_width, init_seed, 101),
                         Projection::kConvInduced, 1.0);
  conv_high_ = &store.add("confounder.conv_high",
                          init_kernel(cfg.conv_channels, cfg.in_channels,
                                      cfg.kernel_width, init_seed, 102),
                          Projection::kConvInduced, 1.0);
  conv_low_->proj_len = cfg.proj_len;
  conv_high_->proj_len = cfg.proj_len;
  w1_ = &store.add("confounder.mlp_w1",
                   init_matrix(cfg.mlp_hidden, 2 * cfg.conv_channels, init_seed, 103),
                   Projection::kSpectral, 1.0);
  w2_ = &store.add("confounder.mlp_w2",
                   init_matrix(cfg.z_dim, cfg.mlp_hidden, init_seed, 104),
                   Projection::kSpectral, 1.0);
}

Var ConfounderBranch::mlp_tail(Tape& tape, Var low_feat, Var high_feat) const {
  std::array<Var, 2> parts{low_feat, high_feat};
  Var cat = tape.concat(parts);
  Var h = tape.matvec_tanh(tape.param(*w1_), cat);
  return tape.matvec_tanh(tape.param(*w2_), h);
}

std::vector<Var> ConfounderBranch::infer_rows(Tape& tape, const Tensor& history) const {
  if (history.rank() != 2 || history.cols() != cfg_.in_channels)
    throw ContractViolation("infer_confounders: history must be [T x (d+j)]");
  std::size_t T = history.rows();
  if (T < 2) throw ContractViolation("infer_confounders: T >= 2 required");

  auto [low_mask, high_mask] = gaussian_masks(T, cfg_.sigma_f);
  Tensor low_mat(T, cfg_.in_channels), high_mat(T, cfg_.in_channels);
  Tensor chan(T);
  for (std::size_t c = 0; c < cfg_.in_channels; ++c) {
    for (std::size_t t = 0; t < T; ++t) chan[t] = history(t, c);
    Tensor lo = band_filter(chan, low_mask);
    Tensor hi = band_filter(chan, high_mask);
    for (std::size_t t = 0; t < T; ++t) {
      low_mat(t, c) = lo[t];
      high_mat(t, c) = hi[t];
    }
  }

  Var low_feat = tape.conv1d_same(tape.constant(std::move(low_mat)),
                                  tape.param(*conv_low_));
  Var high_feat = tape.conv1d_same(tape.constant(std::move(high_mat)),
                                   tape.param(*conv_high_));
  std::vector<Var> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t)
    rows.push_back(mlp_tail(tape, tape.row(low_feat, t), tape.row(high_feat, t)));
  return rows;
}

Tensor ConfounderBranch::infer_values(const Tensor& history) const {
  Tape tape;
  std::vector<Var> rows = infer_rows(tape, history);
  Tensor out(rows.size(), cfg_.z_dim);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const Tensor& v = rows[t].value();
    for (std::size_t c = 0; c < cfg_.z_dim; ++c) out(t, c) = v[c];
  }
  if (!out.all_finite()) throw NumericalError("infer_confounders");
  return out;
}

CausalBandCache ConfounderBranch::prepare_causal_bands(const Tensor& history) const {
  if (history.rank() != 2 || history.cols() != cfg_.in_channels)
    throw ContractViolation("prepare_causal_bands: history must be [T x (d+j)]");
  std::size_t T = history.rows();
  std::size_t ci = cfg_.in_channels, kw = cfg_.kernel_width;
  std::size_t p = (kw - 1) / 2;

  CausalBandCache cache;
  cache.length = T;
  cache.low_taps.resize(T);
  cache.high_taps.resize(T);

  // circulant filter rows per window length, computed once per length
  std::vector<Tensor> low_rows(cfg_.causal_window + 1), high_rows(cfg_.causal_window + 1);
  for (std::size_t n = 1; n < T; ++n) {
    std::size_t len = std::min(n + 1, cfg_.causal_window);
    if (low_rows[len].empty()) {
      auto [lm, hm] = gaussian_masks(len, cfg_.sigma_f);
      low_rows[len] = band_filter_row(lm);
      high_rows[len] = band_filter_row(hm);
    }
    const Tensor& lr = low_rows[len];
    const Tensor& hr = high_rows[len];
    std::size_t start = n + 1 - len;  // window covers [start, n]
    std::vector<double>& lo = cache.low_taps[n];
    std::vector<double>& hi = cache.high_taps[n];
    lo.assign(kw * ci, 0.0);
    hi.assign(kw * ci, 0.0);
    // tap q reads band row (len-1) + q - p of the window; rows beyond the
    // window end are the conv's zero padding
    for (std::size_t q = 0; q < kw; ++q) {
      std::ptrdiff_t r = std::ptrdiff_t(len - 1) + std::ptrdiff_t(q) - std::ptrdiff_t(p);
      if (r < 0 || r >= std::ptrdiff_t(len)) continue;
      for (std::size_t c = 0; c < ci; ++c) {
        double lacc = 0.0, hacc = 0.0;
        for (std::size_t m = 0; m < len; ++m) {
          std::size_t src = (std::size_t(r) + len - m) % len;  // (r - m) mod len
          double v = history(start + src, c);
          lacc += lr[m] * v;
          hacc += hr[m] * v;
        }
        lo[q * ci + c] = lacc;
        hi[q * ci + c] = hacc;
      }
    }
  }
  return cache;
}

std::vector<Var> ConfounderBranch::causal_from_cache(Tape& tape,
                                                     const CausalBandCache& cache) const {
  std::vector<Var> rows;
  rows.reserve(cache.length);
  rows.push_back(tape.constant(Tensor(cfg_.z_dim)));  // no history at t_0
  for (std::size_t n = 1; n < cache.length; ++n) {
    Var lo = tape.conv_tap(tape.param(*conv_low_), cache.low_taps[n]);
    Var hi = tape.conv_tap(tape.param(*conv_high_), cache.high_taps[n]);
    rows.push_back(mlp_tail(tape, lo, hi));
  }
  return rows;
}

std::vector<Var> ConfounderBranch::infer_causal(Tape& tape, const Tensor& history) const {
  if (history.rows() < 2)
    throw ContractViolation("infer_causal: T >= 2 required");
  return causal_from_cache(tape, prepare_causal_bands(history));
}

BandEnergy band_energy_split(const Tensor& history, double sigma_f) {
  if (history.rank() != 2 || history.rows() < 2)
    throw ContractViolation("band_energy_split: history must be [T x c] with T >= 2");
  std::size_t T = history.rows(), ch = history.cols();
  auto [low_mask, high_mask] = gaussian_masks(T, sigma_f);
  BandEnergy e;
  Tensor chan(T);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t t = 0; t < T; ++t) chan[t] = history(t, c);
    Spectrum s = dft(chan);
    for (std::size_t k = 0; k < T; ++k) {
      double p = s.real[k] * s.real[k] + s.imag[k] * s.imag[k];
      e.total += p;
      e.low += low_mask[k] * low_mask[k] * p;
      e.high += high_mask[k] * high_mask[k] * p;
    }
  }
  if (e.total > 0.0) {
    e.low_fraction = e.low / e.total;
    e.high_fraction = e.high / e.total;
  }
  return e;
}

}  // namespace lipscde
