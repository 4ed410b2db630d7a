// Command-line front end: simulate / train / evaluate / grid.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "lipscde/dataset_io.hpp"
#include "lipscde/grid.hpp"
#include "lipscde/metrics.hpp"
#include "lipscde/model.hpp"
#include "lipscde/msm.hpp"
#include "lipscde/simulator.hpp"
#include "lipscde/train.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace lipscde;

struct CliConfig {
  SimConfig sim;
  ModelConfig model;
  TrainConfig train;
  std::vector<double> missing_rates{0.0, 0.15, 0.30};
  std::vector<double> gammas{0.0, 0.2, 0.4};
  std::vector<std::string> methods{"conf", "msm", "lipscde"};
  int n_seeds = 5;
  bool log_timings = false;
};

void apply_json(CliConfig& cfg, const json& j) {
  if (j.contains("sim")) cfg.sim = sim_config_from_json(j.at("sim").dump());
  if (j.contains("model")) {
    const json& m = j.at("model");
    ModelConfig& mc = cfg.model;
    mc.z_dim = m.value("z_dim", mc.z_dim);
    mc.latent_dim = m.value("latent_dim", mc.latent_dim);
    mc.brownian_dim = m.value("brownian_dim", mc.brownian_dim);
    mc.diffusion_scale = m.value("diffusion_scale", mc.diffusion_scale);
    mc.delta_stability = m.value("delta_stability", mc.delta_stability);
    mc.learned_init = m.value("learned_init", mc.learned_init);
    mc.max_step = m.value("max_step", mc.max_step);
    mc.use_confounder_branch = m.value("use_confounder_branch", mc.use_confounder_branch);
    mc.eval_samples = m.value("eval_samples", mc.eval_samples);
    mc.conv_channels = m.value("conv_channels", mc.conv_channels);
    mc.kernel_width = m.value("kernel_width", mc.kernel_width);
    mc.mlp_hidden = m.value("mlp_hidden", mc.mlp_hidden);
    mc.sigma_f = m.value("sigma_f", mc.sigma_f);
    mc.causal_window = m.value("causal_window", mc.causal_window);
    mc.init_seed = m.value("init_seed", mc.init_seed);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    TrainConfig& tc = cfg.train;
    tc.lr = t.value("lr", tc.lr);
    tc.beta1 = t.value("beta1", tc.beta1);
    tc.beta2 = t.value("beta2", tc.beta2);
    tc.eps = t.value("eps", tc.eps);
    tc.epochs = t.value("epochs", tc.epochs);
    tc.iterations_per_batch = t.value("iterations_per_batch", tc.iterations_per_batch);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.outcome_weight = t.value("outcome_weight", tc.outcome_weight);
    tc.seed = t.value("seed", tc.seed);
  }
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (g.contains("missing_rates"))
      cfg.missing_rates = g.at("missing_rates").get<std::vector<double>>();
    if (g.contains("gammas")) cfg.gammas = g.at("gammas").get<std::vector<double>>();
    if (g.contains("methods"))
      cfg.methods = g.at("methods").get<std::vector<std::string>>();
    cfg.n_seeds = g.value("n_seeds", cfg.n_seeds);
    cfg.log_timings = g.value("log_timings", cfg.log_timings);
  }
}

CliConfig load_config(const std::string& path) {
  CliConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  apply_json(cfg, json::parse(in));
  return cfg;
}

void sync_dims(CliConfig& cfg) {
  cfg.model.d = cfg.sim.d;
  cfg.model.j = cfg.sim.j;
}

void write_loss_history(const TrainResult& result, const std::string& path) {
  std::ofstream out(path + ".tmp", std::ios::binary);
  out << "epoch,batch,iteration,factor_loss,outcome_loss,total_loss\n";
  char buf[160];
  for (const LossEntry& e : result.history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.9f,%.9f,%.9f\n", e.epoch, e.batch,
                  e.iteration, e.factor, e.outcome, e.total);
    out << buf;
  }
  out.close();
  fs::rename(path + ".tmp", path);
}

void write_metrics_json(const MetricsReport& rep, const std::string& path) {
  json out{{"rmse_pct_factual", rep.rmse_pct_factual},
           {"rmse_pct_counterfactual", rep.rmse_pct_counterfactual},
           {"ate_error", rep.ate_error},
           {"runtime_seconds", rep.runtime_seconds},
           {"seed", rep.seed}};
  std::ofstream f(path + ".tmp", std::ios::binary);
  f << out.dump(2) << "\n";
  f.close();
  fs::rename(path + ".tmp", path);
}

Dataset obtain_dataset(const CliConfig& cfg, const std::string& dataset_dir) {
  if (!dataset_dir.empty()) return read_dataset(dataset_dir);
  return generate_dataset(cfg.sim);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LipSCDE: continuous-time treatment effects under hidden confounders"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", dataset_dir, checkpoint_path, method = "lipscde";
  std::optional<uint64_t> seed;
  std::optional<double> missing_rate, gamma;

  app.add_option("--config", config_path, "JSON config file");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Master seed (overrides config)");
    cmd->add_option("--out-dir", out_dir, "Output directory");
    cmd->add_option("--missing-rate", missing_rate, "Missing rate override");
    cmd->add_option("--gamma", gamma, "Confounding degree override");
  };

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Generate a confounded dataset");
  add_common(sim_cmd);

  CLI::App* train_cmd = app.add_subcommand("train", "Train one estimator");
  add_common(train_cmd);
  train_cmd->add_option("--dataset", dataset_dir, "Dataset directory (else simulated)");
  train_cmd->add_option("--method", method, "conf|lipscde")
      ->check(CLI::IsMember({"conf", "lipscde"}));

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--dataset", dataset_dir, "Dataset directory (else simulated)");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint.bin path")
      ->required();

  CLI::App* grid_cmd = app.add_subcommand("grid", "Run the full experiment grid");
  add_common(grid_cmd);
  grid_cmd->add_option("--method", method, "Restrict to one method");

  CLI11_PARSE(app, argc, argv);

  try {
    CliConfig cfg = load_config(config_path);
    if (seed) {
      cfg.sim.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (missing_rate) cfg.sim.missing_rate = *missing_rate;
    if (gamma) cfg.sim.gamma = *gamma;
    sync_dims(cfg);
    fs::create_directories(out_dir);

    if (sim_cmd->parsed()) {
      Dataset ds = generate_dataset(cfg.sim);
      write_dataset(ds, out_dir);
      std::cout << "wrote " << ds.units.size() << " units to " << out_dir << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      Dataset ds = obtain_dataset(cfg, dataset_dir);
      cfg.sim = ds.manifest.config;
      sync_dims(cfg);
      auto train_units = ds.split(ds.manifest.train_ids);
      ModelConfig mc = cfg.model;
      mc.use_confounder_branch = method != "conf";
      LipscdeModel model(mc);
      TrainResult result = train(model, train_units, cfg.train);
      write_loss_history(result, out_dir + "/loss_history.csv");
      model.save_checkpoint(out_dir + "/checkpoint.bin");
      if (result.aborted) {
        std::cerr << "training aborted at iteration " << result.abort_iteration
                  << " (non-finite loss); last good parameters saved\n";
        return 2;
      }
      std::cout << "trained " << method << ": final loss "
                << result.history.back().total << ", checkpoint in " << out_dir << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      Dataset ds = obtain_dataset(cfg, dataset_dir);
      auto test_units = ds.split(ds.manifest.test_ids);
      LipscdeModel model = LipscdeModel::load_checkpoint(checkpoint_path);
      MetricsReport rep = evaluate_model(model, test_units, cfg.train.seed);
      write_metrics_json(rep, out_dir + "/metrics.json");
      std::cout << "rmse_pct_factual=" << rep.rmse_pct_factual
                << " rmse_pct_cf=" << rep.rmse_pct_counterfactual
                << " ate_error=" << rep.ate_error << "\n";
      return 0;
    }

    if (grid_cmd->parsed()) {
      GridConfig gc;
      gc.sim = cfg.sim;
      gc.model = cfg.model;
      gc.train = cfg.train;
      gc.missing_rates = cfg.missing_rates;
      gc.gammas = cfg.gammas;
      gc.methods = cfg.methods;
      gc.n_seeds = cfg.n_seeds;
      gc.base_seed = seed.value_or(cfg.sim.seed);
      gc.log_timings_in_grid = cfg.log_timings;
      if (grid_cmd->count("--method")) gc.methods = {method};

      GridResult result = run_grid(gc);
      write_grid_csv(result, out_dir + "/grid.csv", gc.log_timings_in_grid);
      write_timings_csv(result, out_dir + "/timings.csv");
      write_grid_plots(result, gc, out_dir + "/plots");
      std::size_t failures = 0;
      for (const GridCell& c : result.cells) failures += c.failed ? 1 : 0;
      std::cout << "grid complete: " << result.cells.size() << " cells, " << failures
                << " failures; outputs in " << out_dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
