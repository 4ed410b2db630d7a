#pragma once

#include <string>
#include <vector>

#include "lipscde/metrics.hpp"
#include "lipscde/model.hpp"
#include "lipscde/simulator.hpp"
#include "lipscde/train.hpp"

namespace lipscde {

struct GridConfig {
  SimConfig sim;      // gamma / missing_rate / seed overridden per cell
  ModelConfig model;  // d, j are synced from sim
  TrainConfig train;
  std::vector<double> missing_rates{0.0, 0.15, 0.30};
  std::vector<double> gammas{0.0, 0.2, 0.4};
  std::vector<std::string> methods{"conf", "msm", "lipscde"};
  int n_seeds = 5;
  uint64_t base_seed = 7;
  bool log_timings_in_grid = false;  // grid.csv stays byte-deterministic by default
};

struct GridCell {
  double missing = 0.0;
  double gamma = 0.0;
  std::string method;
  uint64_t seed = 0;
  MetricsReport metrics;
  bool failed = false;
  std::string error;
};

struct GridResult {
  std::vector<GridCell> cells;

  /// Mean of a metric over seeds for one (missing, gamma, method) cell.
  double mean_counterfactual(double missing, double gamma,
                             const std::string& method) const;
};

/// Runs the full missing-rate x confounding-degree x method grid with
/// n_seeds replicates per cell. Cells run in parallel worker threads, capped
/// by the LIPSCDE_THREADS environment variable; any cell failure is recorded
/// and the grid continues. Results are deterministic in (config, base_seed).
GridResult run_grid(const GridConfig& cfg);

/// grid.csv with the fixed column set. runtime_s is written as 0 unless
/// log_timings is set, keeping the default output byte-identical across
/// repeated runs with the same seed; measured timings always go to
/// timings.csv.
void write_grid_csv(const GridResult& result, const std::string& path, bool log_timings);
void write_timings_csv(const GridResult& result, const std::string& path);

/// One SVG per missing rate: mean counterfactual error against gamma, one
/// polyline per method.
void write_grid_plots(const GridResult& result, const GridConfig& cfg,
                      const std::string& dir);

/// Worker-thread cap: LIPSCDE_THREADS, else hardware concurrency.
unsigned grid_thread_cap();

}  // namespace lipscde
