#include "lipscde/model.hpp"

#include <cstring>
#include <fstream>

#include "lipscde/errors.hpp"
#include "lipscde/rng.hpp"

namespace lipscde {

namespace {
constexpr char kCheckpointMagic[8] = {'L', 'P', 'S', 'D', '0', '0', '0', '1'};
}

LipscdeModel::LipscdeModel(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.use_confounder_branch) {
    ConfounderConfig cc;
    cc.in_channels = cfg.d + cfg.j;
    cc.conv_channels = cfg.conv_channels;
    cc.kernel_width = cfg.kernel_width;
    cc.mlp_hidden = cfg.mlp_hidden;
    cc.z_dim = cfg.z_dim;
    cc.sigma_f = cfg.sigma_f;
    cc.causal_window = cfg.causal_window;
    branch_ = std::make_unique<ConfounderBranch>(store_, cc, cfg.init_seed);
  }
  LatentConfig lc;
  lc.d = cfg.d;
  lc.j = cfg.j;
  lc.z_dim = cfg.z_dim;
  lc.latent_dim = cfg.latent_dim;
  lc.brownian_dim = cfg.brownian_dim;
  lc.diffusion_scale = cfg.diffusion_scale;
  lc.delta_stability = cfg.delta_stability;
  lc.learned_init = cfg.learned_init;
  lc.max_step = cfg.max_step;
  latent_ = std::make_unique<LatentModel>(store_, lc, cfg.init_seed);

  OutcomeConfig oc;
  oc.latent_dim = cfg.latent_dim;
  oc.j = cfg.j;
  oc.hidden = cfg.latent_dim;
  outcome_ = std::make_unique<OutcomeModel>(store_, oc, cfg.init_seed);

  marginal_.assign(cfg.j, 0.5);
  store_.apply_projections();  // start feasible
}

void LipscdeModel::set_treatment_marginals(std::vector<double> marginal) {
  if (marginal.size() != cfg_.j)
    throw ContractViolation("set_treatment_marginals: size mismatch");
  marginal_ = std::move(marginal);
}

PreparedUnit LipscdeModel::prepare(const ObservedUnit& obs) const {
  return latent_->prepare(obs, branch_.get());
}

UnitForward LipscdeModel::forward_unit(Tape& tape, const PreparedUnit& prep,
                                       uint64_t sample_seed) const {
  return latent_->forward(tape, prep, branch_.get(), sample_seed);
}

LatentPath LipscdeModel::forward_unit_path(const UnitRecord& rec,
                                           uint64_t sample_seed) const {
  Tape tape;
  PreparedUnit prep = prepare(rec.observed());
  UnitForward fwd = forward_unit(tape, prep, sample_seed);
  return latent_->to_latent_path(prep, fwd);
}

std::size_t LipscdeModel::sample_count() const {
  // deterministic mode: every sample is identical, one is enough (and keeps
  // the mean bit-exactly equal to the single draw)
  return cfg_.diffusion_scale == 0.0 ? 1 : cfg_.eval_samples;
}

double LipscdeModel::predict_final(const UnitRecord& rec, const Tensor& plan,
                                   uint64_t eval_seed) const {
  const ObservedUnit obs = rec.observed();
  if (plan.rows() != obs.length() || plan.cols() != cfg_.j)
    throw ContractViolation("predict_final: plan must align with unit timestamps");
  PreparedUnit prep = prepare(obs);
  std::size_t ns = sample_count();
  double acc = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    Tape tape;
    uint64_t seed = rng_u64(eval_seed, Stream::kSdeSample, uint64_t(rec.unit_id), s);
    UnitForward fwd = forward_unit(tape, prep, seed);
    std::vector<Var> preds =
        outcome_->decode(tape, fwd.obs_states, plan, prep.dt_obs);
    acc += preds.back().value().scalar_value();
  }
  return acc / double(ns);
}

std::vector<double> LipscdeModel::predict_factual(const UnitRecord& rec,
                                                  uint64_t eval_seed) const {
  const ObservedUnit obs = rec.observed();
  PreparedUnit prep = prepare(obs);
  std::size_t ns = sample_count();
  std::vector<double> acc(obs.length() - 1, 0.0);
  for (std::size_t s = 0; s < ns; ++s) {
    Tape tape;
    uint64_t seed = rng_u64(eval_seed, Stream::kSdeSample, uint64_t(rec.unit_id), s);
    UnitForward fwd = forward_unit(tape, prep, seed);
    std::vector<Var> preds = outcome_->decode(tape, fwd.obs_states, *obs.a, prep.dt_obs);
    for (std::size_t k = 0; k < preds.size(); ++k)
      acc[k] += preds[k].value().scalar_value();
  }
  for (double& v : acc) v /= double(ns);
  return acc;
}

double LipscdeModel::ite(const UnitRecord& rec, const Tensor& plan,
                         uint64_t eval_seed) const {
  const ObservedUnit obs = rec.observed();
  PreparedUnit prep = prepare(obs);
  std::size_t ns = sample_count();
  double acc = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    Tape tape;
    uint64_t seed = rng_u64(eval_seed, Stream::kSdeSample, uint64_t(rec.unit_id), s);
    UnitForward fwd = forward_unit(tape, prep, seed);
    std::vector<Var> cf = outcome_->decode(tape, fwd.obs_states, plan, prep.dt_obs);
    std::vector<Var> fa = outcome_->decode(tape, fwd.obs_states, *obs.a, prep.dt_obs);
    acc += cf.back().value().scalar_value() - fa.back().value().scalar_value();
  }
  return acc / double(ns);
}

double ate(const LipscdeModel& model, std::span<const UnitRecord* const> units,
           const std::string& plan_name, uint64_t eval_seed) {
  if (units.empty()) throw ContractViolation("ate: empty dataset");
  double acc = 0.0;
  for (const UnitRecord* u : units) {
    const CfPlan* plan = u->plan(plan_name);
    if (plan == nullptr) throw ContractViolation("ate: unknown plan " + plan_name);
    acc += model.ite(*u, plan->treatments, eval_seed);
  }
  return acc / double(units.size());
}

ModelConfig conf_model_config(ModelConfig cfg) {
  cfg.use_confounder_branch = false;
  return cfg;
}

// ---- checkpointing ----

namespace {

void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void LipscdeModel::save_checkpoint(const std::string& path) const {
  std::ofstream out(path + ".tmp", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64(out, cfg_.d);
  write_u64(out, cfg_.j);
  write_u64(out, cfg_.z_dim);
  write_u64(out, cfg_.latent_dim);
  write_u64(out, cfg_.brownian_dim);
  write_f64(out, cfg_.diffusion_scale);
  write_f64(out, cfg_.delta_stability);
  write_u64(out, cfg_.learned_init ? 1 : 0);
  write_f64(out, cfg_.max_step);
  write_u64(out, cfg_.use_confounder_branch ? 1 : 0);
  write_u64(out, cfg_.eval_samples);
  write_u64(out, cfg_.conv_channels);
  write_u64(out, cfg_.kernel_width);
  write_u64(out, cfg_.mlp_hidden);
  write_f64(out, cfg_.sigma_f);
  write_u64(out, cfg_.causal_window);
  write_u64(out, cfg_.init_seed);

  write_u64(out, marginal_.size());
  for (double m : marginal_) write_f64(out, m);

  write_u64(out, store_.size());
  for (const Param& p : store_) {
    write_u64(out, p.name.size());
    out.write(p.name.data(), long(p.name.size()));
    write_u64(out, uint64_t(p.value.rank()));
    for (int r = 0; r < p.value.rank(); ++r) write_u64(out, p.value.dim(r));
    for (double v : p.value.values()) write_f64(out, v);
  }
  out.close();
  std::remove(path.c_str());
  if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot finalize checkpoint " + path);
}

LipscdeModel LipscdeModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);

  ModelConfig cfg;
  cfg.d = read_u64(in);
  cfg.j = read_u64(in);
  cfg.z_dim = read_u64(in);
  cfg.latent_dim = read_u64(in);
  cfg.brownian_dim = read_u64(in);
  cfg.diffusion_scale = read_f64(in);
  cfg.delta_stability = read_f64(in);
  cfg.learned_init = read_u64(in) != 0;
  cfg.max_step = read_f64(in);
  cfg.use_confounder_branch = read_u64(in) != 0;
  cfg.eval_samples = read_u64(in);
  cfg.conv_channels = read_u64(in);
  cfg.kernel_width = read_u64(in);
  cfg.mlp_hidden = read_u64(in);
  cfg.sigma_f = read_f64(in);
  cfg.causal_window = read_u64(in);
  cfg.init_seed = read_u64(in);

  LipscdeModel model(cfg);
  std::size_t nm = read_u64(in);
  std::vector<double> marg(nm);
  for (double& m : marg) m = read_f64(in);
  model.set_treatment_marginals(std::move(marg));

  std::size_t np = read_u64(in);
  if (np != model.store_.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < np; ++i) {
    std::size_t len = read_u64(in);
    std::string name(len, '\0');
    in.read(name.data(), long(len));
    Param& p = model.store_[i];
    if (p.name != name)
      throw std::runtime_error("checkpoint parameter order mismatch at " + name);
    std::size_t rank = read_u64(in);
    if (rank != std::size_t(p.value.rank()))
      throw std::runtime_error("checkpoint rank mismatch at " + name);
    for (std::size_t r = 0; r < rank; ++r) {
      if (read_u64(in) != p.value.dim(int(r)))
        throw std::runtime_error("checkpoint shape mismatch at " + name);
    }
    for (double& v : p.value.values()) v = read_f64(in);
  }
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return model;
}

}  // namespace lipscde
