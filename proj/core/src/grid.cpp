#include "lipscde/grid.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "lipscde/rng.hpp"

namespace lipscde {

namespace {

constexpr Stream kGridStream = Stream::kGrid;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct CellTask {
  std::size_t mi, gi, si;
};

}  // namespace

unsigned grid_thread_cap() {
  if (const char* env = std::getenv("LIPSCDE_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return unsigned(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

double GridResult::mean_counterfactual(double missing, double gamma,
                                       const std::string& method) const {
  double acc = 0.0;
  std::size_t n = 0;
  for (const GridCell& c : cells) {
    if (c.failed || c.method != method) continue;
    if (c.missing != missing || c.gamma != gamma) continue;
    acc += c.metrics.rmse_pct_counterfactual;
    ++n;
  }
  return n > 0 ? acc / double(n) : std::numeric_limits<double>::quiet_NaN();
}

GridResult run_grid(const GridConfig& cfg) {
  std::vector<CellTask> tasks;
  for (std::size_t mi = 0; mi < cfg.missing_rates.size(); ++mi)
    for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi)
      for (std::size_t si = 0; si < std::size_t(cfg.n_seeds); ++si)
        tasks.push_back(CellTask{mi, gi, si});

  GridResult result;
  result.cells.resize(tasks.size() * cfg.methods.size());

  auto run_task = [&](const CellTask& task, std::size_t task_idx) {
    double missing = cfg.missing_rates[task.mi];
    double gamma = cfg.gammas[task.gi];
    uint64_t cell_seed =
        rng_u64(cfg.base_seed, kGridStream, task.mi, task.gi, task.si);

    SimConfig sim = cfg.sim;
    sim.gamma = gamma;
    sim.missing_rate = missing;
    sim.seed = cell_seed;

    Dataset ds;
    bool sim_ok = true;
    std::string sim_error;
    try {
      ds = generate_dataset(sim);
    } catch (const std::exception& e) {
      sim_ok = false;
      sim_error = e.what();
    }

    for (std::size_t me = 0; me < cfg.methods.size(); ++me) {
      GridCell& cell = result.cells[task_idx * cfg.methods.size() + me];
      cell.missing = missing;
      cell.gamma = gamma;
      cell.method = cfg.methods[me];
      cell.seed = cell_seed;
      if (!sim_ok) {
        cell.failed = true;
        cell.error = sim_error;
        continue;
      }
      auto t0 = std::chrono::steady_clock::now();
      try {
        auto train_units = ds.split(ds.manifest.train_ids);
        auto test_units = ds.split(ds.manifest.test_ids);
        uint64_t eval_seed = rng_u64(cell_seed, Stream::kSdeSample, 998877);

        if (cell.method == "msm") {
          MsmModel msm = msm_fit(train_units, cfg.model.max_step);
          cell.metrics = evaluate_msm(msm, test_units);
        } else {
          ModelConfig mc = cfg.model;
          mc.d = sim.d;
          mc.j = sim.j;
          mc.use_confounder_branch = cell.method != "conf";
          mc.init_seed = rng_u64(cell_seed, Stream::kParamInit, me);
          LipscdeModel model(mc);
          TrainConfig tc = cfg.train;
          tc.seed = rng_u64(cell_seed, Stream::kShuffle, me);
          train(model, train_units, tc);
          cell.metrics = evaluate_model(model, test_units, eval_seed);
        }
        cell.metrics.seed = cell_seed;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      cell.metrics.runtime_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };

  unsigned n_threads = std::min<unsigned>(grid_thread_cap(), unsigned(tasks.size()));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(tasks[i], i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= tasks.size()) return;
          run_task(tasks[i], i);
        }
      });
    for (std::thread& t : pool) t.join();
  }
  return result;
}

void write_grid_csv(const GridResult& result, const std::string& path, bool log_timings) {
  std::ostringstream out;
  out << "missing,gamma,method,seed,rmse_pct_factual,rmse_pct_cf,ate_error,runtime_s\n";
  for (const GridCell& c : result.cells) {
    out << fmt(c.missing) << ',' << fmt(c.gamma) << ',' << c.method << ',' << c.seed
        << ',';
    if (c.failed) {
      out << "nan,nan,nan," << fmt(log_timings ? c.metrics.runtime_seconds : 0.0)
          << '\n';
      continue;
    }
    out << fmt(c.metrics.rmse_pct_factual) << ','
        << fmt(c.metrics.rmse_pct_counterfactual) << ',' << fmt(c.metrics.ate_error)
        << ',' << fmt(log_timings ? c.metrics.runtime_seconds : 0.0) << '\n';
  }
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f << out.str();
  }
  std::filesystem::rename(tmp, path);
}

void write_timings_csv(const GridResult& result, const std::string& path) {
  std::ostringstream out;
  out << "missing,gamma,method,seed,runtime_s\n";
  for (const GridCell& c : result.cells)
    out << fmt(c.missing) << ',' << fmt(c.gamma) << ',' << c.method << ',' << c.seed
        << ',' << fmt(c.metrics.runtime_seconds) << '\n';
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f << out.str();
  }
  std::filesystem::rename(tmp, path);
}

namespace {

const char* method_color(const std::string& m) {
  if (m == "lipscde") return "#1f77b4";
  if (m == "conf") return "#d62728";
  return "#2ca02c";
}

}  // namespace

void write_grid_plots(const GridResult& result, const GridConfig& cfg,
                      const std::string& dir) {
  std::filesystem::create_directories(dir);
  const double W = 480, H = 320, ml = 56, mr = 16, mt = 28, mb = 40;

  for (double missing : cfg.missing_rates) {
    double vmax = 0.0;
    for (const GridCell& c : result.cells)
      if (!c.failed && c.missing == missing)
        vmax = std::max(vmax, c.metrics.rmse_pct_counterfactual);
    if (vmax <= 0.0) vmax = 1.0;
    vmax *= 1.15;

    auto xpos = [&](double g) {
      double g0 = cfg.gammas.front(), g1 = cfg.gammas.back();
      return ml + (W - ml - mr) * (g1 > g0 ? (g - g0) / (g1 - g0) : 0.5);
    };
    auto ypos = [&](double v) { return H - mb - (H - mt - mb) * (v / vmax); };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-size='13'>"
        << "counterfactual RMSE(%) vs confounding degree, missing rate "
        << fmt(missing) << "</text>\n";
    svg << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='"
        << H - mb << "' stroke='black'/>\n";
    svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    for (double g : cfg.gammas)
      svg << "<text x='" << xpos(g) << "' y='" << H - mb + 18
          << "' text-anchor='middle' font-size='11'>" << fmt(g) << "</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
      double v = vmax * tick / 4.0;
      svg << "<text x='" << ml - 6 << "' y='" << ypos(v) + 4
          << "' text-anchor='end' font-size='11'>" << fmt(v) << "</text>\n";
    }

    double ly = mt + 12;
    for (const std::string& method : cfg.methods) {
      std::ostringstream pts;
      for (double g : cfg.gammas) {
        double v = result.mean_counterfactual(missing, g, method);
        if (!std::isfinite(v)) continue;
        pts << xpos(g) << ',' << ypos(v) << ' ';
      }
      svg << "<polyline fill='none' stroke='" << method_color(method)
          << "' stroke-width='2' points='" << pts.str() << "'/>\n";
      svg << "<text x='" << W - mr - 80 << "' y='" << ly << "' font-size='11' fill='"
          << method_color(method) << "'>" << method << "</text>\n";
      ly += 14;
    }
    svg << "</svg>\n";

    char name[64];
    std::snprintf(name, sizeof(name), "missing_%02d.svg", int(missing * 100 + 0.5));
    std::string path = dir + "/" + name;
    std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary);
      f << svg.str();
    }
    std::filesystem::rename(tmp, path);
  }
}

}  // namespace lipscde
