#include "rcl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rcl {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::runtime_error("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

TeacherTaskConfig parse_generator(const json& j) {
  check_keys(j,
             {"seed", "input_dim", "world_hidden_dim", "world_layers", "classes", "n_train",
              "n_dev", "n_heldout"},
             "dataset.generator");
  TeacherTaskConfig g;
  read(j, "seed", g.seed);
  read(j, "input_dim", g.input_dim);
  read(j, "world_hidden_dim", g.world_hidden_dim);
  read(j, "world_layers", g.world_layers);
  read(j, "classes", g.num_classes);
  read(j, "n_train", g.n_train);
  read(j, "n_dev", g.n_dev);
  read(j, "n_heldout", g.n_heldout);
  return g;
}

EncoderConfig parse_model(const json& j) {
  check_keys(j, {"input_dim", "hidden_dim", "num_layers", "activation", "num_classes", "seed"},
             "model");
  EncoderConfig c;
  read(j, "input_dim", c.input_dim);
  read(j, "hidden_dim", c.hidden_dim);
  read(j, "num_layers", c.num_layers);
  if (j.contains("activation")) {
    c.activation = activation_from_name(j.at("activation").get<std::string>());
  }
  read(j, "num_classes", c.num_classes);
  read(j, "seed", c.seed);
  return c;
}

TrainConfig parse_train(const json& j) {
  check_keys(j,
             {"epochs", "batch_size", "learning_rate", "weight_decay", "bias_correction",
              "metric", "seed", "apply_epoch_rule", "failed_margin"},
             "train");
  TrainConfig c;
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "weight_decay", c.optimizer.weight_decay);
  read(j, "bias_correction", c.optimizer.bias_correction);
  if (j.contains("metric")) c.metric = metric_from_name(j.at("metric").get<std::string>());
  read(j, "seed", c.seed);
  read(j, "apply_epoch_rule", c.apply_epoch_rule);
  read(j, "failed_margin", c.failed_margin);
  return c;
}

MethodSpec parse_method(const json& j) {
  check_keys(j,
             {"kind", "name", "lambda", "lambda_grid", "layer", "mlp_depth", "noise_delta",
              "temperature", "reinit_k", "center_updates"},
             "regularizers[]");
  MethodSpec m;
  const std::string kind = j.at("kind").get<std::string>();
  m.reg.kind = reg_kind_from_name(kind == "std++" ? "none" : kind);
  m.name = kind;
  read(j, "name", m.name);
  if (j.contains("lambda")) {
    m.reg.lambda = j.at("lambda").get<double>();
  } else {
    m.lambda_grid = default_lambda_grid(m.reg.kind);
    if (m.reg.kind == RegKind::None || m.reg.kind == RegKind::Reinit) m.lambda_grid.clear();
  }
  if (j.contains("lambda_grid")) {
    m.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  }
  read(j, "layer", m.reg.layer);
  read(j, "mlp_depth", m.reg.mlp_depth);
  read(j, "noise_delta", m.reg.noise_delta);
  read(j, "temperature", m.reg.temperature);
  read(j, "reinit_k", m.reg.reinit_k);
  read(j, "center_updates", m.reg.center_updates);
  return m;
}

ExperimentBlock parse_experiment(const json& j) {
  check_keys(j,
             {"kind", "seeds", "output_dir", "noise_grid", "sizes", "train_size",
              "pretrain_tasks", "probe_task", "probe_epochs", "theory_tasks", "mc_samples"},
             "experiment");
  ExperimentBlock e;
  e.kind = j.at("kind").get<std::string>();
  static const std::set<std::string> kinds = {"train",      "probe",    "noise-sweep",
                                              "size-sweep", "collapse", "verify-theory"};
  if (!kinds.count(e.kind)) {
    throw std::runtime_error("config: unknown experiment kind '" + e.kind + "'");
  }
  read(j, "seeds", e.seeds);
  read(j, "output_dir", e.output_dir);
  read(j, "noise_grid", e.noise_grid);
  read(j, "sizes", e.sizes);
  read(j, "train_size", e.train_size);
  read(j, "pretrain_tasks", e.pretrain_tasks);
  read(j, "probe_task", e.probe_task);
  read(j, "probe_epochs", e.probe_epochs);
  read(j, "theory_tasks", e.theory_tasks);
  read(j, "mc_samples", e.mc_samples);
  if (e.seeds.empty()) throw std::runtime_error("config: experiment.seeds must be nonempty");
  return e;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: JSON parse error: ") + e.what());
  }
  check_keys(j, {"dataset", "model", "pretrain", "train", "regularizers", "experiment"},
             "top level");

  RunConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"generator", "num_tasks", "csv"}, "dataset");
    if (d.contains("generator")) cfg.dataset.generator = parse_generator(d.at("generator"));
    read(d, "num_tasks", cfg.dataset.num_tasks);
    if (d.contains("csv")) cfg.dataset.csv_path = d.at("csv").get<std::string>();
    if (cfg.dataset.generator && cfg.dataset.csv_path) {
      throw std::runtime_error("config: dataset.generator and dataset.csv are exclusive");
    }
  }
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    check_keys(p, {"epochs", "batch_size", "learning_rate"}, "pretrain");
    read(p, "epochs", cfg.pretrain.epochs);
    read(p, "batch_size", cfg.pretrain.batch_size);
    read(p, "learning_rate", cfg.pretrain.learning_rate);
  }
  if (j.contains("train")) cfg.train = parse_train(j.at("train"));
  if (j.contains("regularizers")) {
    for (const auto& r : j.at("regularizers")) cfg.regularizers.push_back(parse_method(r));
  }
  if (!j.contains("experiment")) throw std::runtime_error("config: missing experiment block");
  cfg.experiment = parse_experiment(j.at("experiment"));
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

}  // namespace rcl
