#include "lipscde/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lipscde/errors.hpp"

namespace lipscde {

namespace {

using nlohmann::json;

json tensor2d_to_json(const Tensor& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor tensor2d_from_json(const json& rows) {
  std::size_t r = rows.size();
  std::size_t c = r > 0 ? rows[0].size() : 0;
  Tensor t(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < c; ++k) t(i, k) = rows[i][k].get<double>();
  return t;
}

json vector_to_json(const Tensor& t) {
  json out = json::array();
  for (double v : t.values()) out.push_back(v);
  return out;
}

Tensor vector_from_json(const json& arr) {
  std::vector<double> v;
  v.reserve(arr.size());
  for (const auto& x : arr) v.push_back(x.get<double>());
  return Tensor::from(std::move(v));
}

void atomic_write(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

json unit_to_json(const UnitRecord& u) {
  json rec;
  rec["unit_id"] = u.unit_id;
  rec["unit_seed"] = u.unit_seed;
  rec["timestamps"] = u.timestamps;
  rec["x"] = tensor2d_to_json(u.x);
  rec["a"] = tensor2d_to_json(u.a);
  rec["y"] = vector_to_json(u.y);
  rec["z_true"] = tensor2d_to_json(u.z_true);
  json plans = json::array();
  json ycfs = json::array();
  for (const CfPlan& p : u.cf_plans) {
    plans.push_back({{"name", p.name}, {"a", tensor2d_to_json(p.treatments)}});
    ycfs.push_back(vector_to_json(p.y_cf));
  }
  rec["cf_plans"] = std::move(plans);
  rec["y_cf"] = std::move(ycfs);
  return rec;
}

UnitRecord unit_from_json(const json& rec) {
  UnitRecord u;
  u.unit_id = rec.at("unit_id").get<int64_t>();
  u.unit_seed = rec.at("unit_seed").get<uint64_t>();
  u.timestamps = rec.at("timestamps").get<std::vector<double>>();
  u.x = tensor2d_from_json(rec.at("x"));
  u.a = tensor2d_from_json(rec.at("a"));
  u.y = vector_from_json(rec.at("y"));
  u.z_true = tensor2d_from_json(rec.at("z_true"));
  const json& plans = rec.at("cf_plans");
  const json& ycfs = rec.at("y_cf");
  for (std::size_t i = 0; i < plans.size(); ++i) {
    CfPlan p;
    p.name = plans[i].at("name").get<std::string>();
    p.treatments = tensor2d_from_json(plans[i].at("a"));
    p.y_cf = vector_from_json(ycfs[i]);
    u.cf_plans.push_back(std::move(p));
  }
  return u;
}

json sim_config_json(const SimConfig& c) {
  return json{{"n_units", c.n_units}, {"t_steps", c.t_steps},
              {"d", c.d},             {"j", c.j},
              {"gamma", c.gamma},     {"missing_rate", c.missing_rate},
              {"sigma_z", c.sigma_z}, {"sigma_x", c.sigma_x},
              {"sigma_y", c.sigma_y}, {"alpha_z", c.alpha_z},
              {"alpha_x", c.alpha_x}, {"beta_a", c.beta_a},
              {"beta_x", c.beta_x},   {"gamma_y", c.gamma_y},
              {"w_z", c.w_z},         {"w_x", c.w_x},
              {"c_z", c.c_z},         {"init_scale", c.init_scale},
              {"seed", c.seed}};
}

SimConfig sim_config_parse(const json& jc) {
  SimConfig c;
  c.n_units = jc.value("n_units", c.n_units);
  c.t_steps = jc.value("t_steps", c.t_steps);
  c.d = jc.value("d", c.d);
  c.j = jc.value("j", c.j);
  c.gamma = jc.value("gamma", c.gamma);
  c.missing_rate = jc.value("missing_rate", c.missing_rate);
  c.sigma_z = jc.value("sigma_z", c.sigma_z);
  c.sigma_x = jc.value("sigma_x", c.sigma_x);
  c.sigma_y = jc.value("sigma_y", c.sigma_y);
  c.alpha_z = jc.value("alpha_z", c.alpha_z);
  c.alpha_x = jc.value("alpha_x", c.alpha_x);
  c.beta_a = jc.value("beta_a", c.beta_a);
  c.beta_x = jc.value("beta_x", c.beta_x);
  c.gamma_y = jc.value("gamma_y", c.gamma_y);
  c.w_z = jc.value("w_z", c.w_z);
  c.w_x = jc.value("w_x", c.w_x);
  c.c_z = jc.value("c_z", c.c_z);
  c.init_scale = jc.value("init_scale", c.init_scale);
  c.seed = jc.value("seed", c.seed);
  return c;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream lines;
  for (const UnitRecord& u : ds.units) lines << unit_to_json(u).dump() << "\n";
  atomic_write(dir + "/dataset.jsonl", lines.str());

  json man;
  man["format"] = ds.manifest.format;
  man["config"] = sim_config_json(ds.manifest.config);
  man["splits"] = {{"train", ds.manifest.train_ids},
                   {"val", ds.manifest.val_ids},
                   {"test", ds.manifest.test_ids}};
  atomic_write(dir + "/manifest.json", man.dump(2) + "\n");
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream man_in(dir + "/manifest.json");
  if (!man_in) throw std::runtime_error("cannot open " + dir + "/manifest.json");
  json man = json::parse(man_in);
  if (man.at("format").get<std::string>() != kDatasetFormat)
    throw std::runtime_error("unsupported dataset format: " +
                             man.at("format").get<std::string>());
  Dataset ds;
  ds.manifest.format = man.at("format").get<std::string>();
  ds.manifest.config = sim_config_parse(man.at("config"));
  ds.manifest.train_ids = man.at("splits").at("train").get<std::vector<int64_t>>();
  ds.manifest.val_ids = man.at("splits").at("val").get<std::vector<int64_t>>();
  ds.manifest.test_ids = man.at("splits").at("test").get<std::vector<int64_t>>();

  std::ifstream in(dir + "/dataset.jsonl");
  if (!in) throw std::runtime_error("cannot open " + dir + "/dataset.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ds.units.push_back(unit_from_json(json::parse(line)));
  }
  return ds;
}

std::string sim_config_to_json(const SimConfig& cfg) {
  return sim_config_json(cfg).dump(2);
}

SimConfig sim_config_from_json(const std::string& text) {
  return sim_config_parse(json::parse(text));
}

}  // namespace lipscde
