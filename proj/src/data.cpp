#include "rcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rcl/net.hpp"
#include "rcl/rng.hpp"

namespace rcl {

void Dataset::validate() const {
  for (const Split* split : {&train, &dev, &heldout}) {
    if (split->features.rows() != split->labels.size()) {
      throw std::invalid_argument("Dataset: features/labels length mismatch");
    }
    for (int y : split->labels) {
      if (y < 0 || y >= num_classes) {
        throw std::invalid_argument("Dataset: label out of range");
      }
    }
  }
  if (train.size() == 0) throw std::invalid_argument("Dataset: empty train split");
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<int> label_by_head(const Matrix& reps, const Matrix& heads,
                               const std::vector<double>& head_biases) {
  std::vector<int> labels(reps.rows());
  for (std::size_t j = 0; j < reps.rows(); ++j) {
    int best = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < heads.rows(); ++c) {
      const double* w = heads.row(c);
      double score = head_biases[c];
      for (std::size_t k = 0; k < reps.cols(); ++k) score += w[k] * reps(j, k);
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    labels[j] = best;
  }
  return labels;
}

bool degenerate(const std::vector<int>& labels, int num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) counts[y]++;
  const auto top = *std::max_element(counts.begin(), counts.end());
  return static_cast<double>(top) > 0.9 * static_cast<double>(labels.size());
}

}  // namespace

std::vector<Dataset> gen_teacher_tasks(const TeacherTaskConfig& config, std::size_t num_tasks) {
  if (num_tasks < 1) throw std::invalid_argument("gen_teacher_tasks: num_tasks must be >= 1");
  if (config.num_classes < 2) {
    throw std::invalid_argument("gen_teacher_tasks: need at least 2 classes");
  }
  Rng root(config.seed);

  const std::size_t total = config.n_train + config.n_dev + config.n_heldout;
  Matrix inputs = gaussian_matrix(total, config.input_dim, root.fork(0));

  EncoderConfig world_cfg;
  world_cfg.input_dim = config.input_dim;
  world_cfg.hidden_dim = config.world_hidden_dim;
  world_cfg.num_layers = config.world_layers;
  world_cfg.activation = Activation::Tanh;
  world_cfg.num_classes = static_cast<std::size_t>(config.num_classes);
  world_cfg.seed = root.fork(1).seed();
  const EncoderModel world = init(world_cfg);
  const Matrix reps = representations(world, inputs, world_cfg.num_layers);

  std::vector<Dataset> tasks;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    Rng task_rng = root.fork(100 + t);
    std::vector<int> labels;
    for (int attempt = 0;; ++attempt) {
      Rng head_rng = task_rng.fork(attempt);
      Matrix heads = gaussian_matrix(config.num_classes, config.world_hidden_dim, head_rng.fork(0));
      std::vector<double> biases(config.num_classes);
      Rng bias_rng = head_rng.fork(1);
      for (double& b : biases) b = bias_rng.normal();
      labels = label_by_head(reps, heads, biases);
      if (!degenerate(labels, config.num_classes)) break;
      if (attempt >= 64) {
        throw std::runtime_error("gen_teacher_tasks: could not draw a balanced head");
      }
    }

    Dataset ds;
    ds.name = "teacher" + std::to_string(t);
    ds.num_classes = config.num_classes;
    auto fill = [&](Split& split, std::size_t begin, std::size_t count) {
      split.features = Matrix(count, config.input_dim);
      split.labels.resize(count);
      for (std::size_t j = 0; j < count; ++j) {
        std::copy(inputs.row(begin + j), inputs.row(begin + j) + config.input_dim,
                  split.features.row(j));
        split.labels[j] = labels[begin + j];
      }
    };
    fill(ds.train, 0, config.n_train);
    fill(ds.dev, config.n_train, config.n_dev);
    fill(ds.heldout, config.n_train + config.n_dev, config.n_heldout);
    ds.validate();
    tasks.push_back(std::move(ds));
  }
  return tasks;
}

Dataset inject_label_noise(const Dataset& ds, const NoiseConfig& cfg) {
  if (ds.num_classes < 2) throw std::invalid_argument("inject_label_noise: need >= 2 classes");
  if (cfg.p < 0.0 || cfg.p > 1.0) throw std::invalid_argument("inject_label_noise: p not in [0,1]");
  Dataset out = ds;
  Rng rng(cfg.seed);
  for (auto& y : out.train.labels) {
    if (rng.uniform() < cfg.p) {
      // Uniform over the other c-1 classes.
      int offset = static_cast<int>(rng.uniform_index(ds.num_classes - 1));
      y = (y + 1 + offset) % ds.num_classes;
    }
  }
  return out;
}

Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.train.size()) throw std::invalid_argument("subsample: n exceeds train size");
  std::vector<std::size_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Fisher-Yates; the prefix of the permutation gives nested subsets.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::size_t j = rng.uniform_index(i + 1);
    std::swap(order[i], order[j]);
  }
  Dataset out = ds;
  out.train.features = Matrix(n, ds.train.features.cols());
  out.train.labels.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    std::copy(ds.train.features.row(src), ds.train.features.row(src) + ds.train.features.cols(),
              out.train.features.row(j));
    out.train.labels[j] = ds.train.labels[src];
  }
  return out;
}

std::string metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::Accuracy: return "accuracy";
    case MetricKind::MacroF1: return "macro_f1";
    case MetricKind::MicroF1: return "micro_f1";
    case MetricKind::Mcc: return "mcc";
  }
  return "accuracy";
}

MetricKind metric_from_name(const std::string& name) {
  if (name == "accuracy") return MetricKind::Accuracy;
  if (name == "macro_f1") return MetricKind::MacroF1;
  if (name == "micro_f1") return MetricKind::MicroF1;
  if (name == "mcc") return MetricKind::Mcc;
  throw std::invalid_argument("unknown metric: " + name);
}

double metric(const std::vector<int>& predictions, const std::vector<int>& labels,
              MetricKind kind) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("metric: predictions/labels length mismatch");
  }
  if (predictions.empty()) throw std::invalid_argument("metric: empty inputs");
  const std::size_t n = labels.size();
  int num_classes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num_classes = std::max(num_classes, std::max(predictions[i], labels[i]) + 1);
  }

  if (kind == MetricKind::Accuracy || kind == MetricKind::MicroF1) {
    // Micro-F1 over all classes equals accuracy in single-label classification.
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(n);
  }

  std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::vector<double> pred_count(num_classes, 0), true_count(num_classes, 0);
  double correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    pred_count[predictions[i]] += 1;
    true_count[labels[i]] += 1;
    if (predictions[i] == labels[i]) {
      tp[labels[i]] += 1;
      correct += 1;
    } else {
      fp[predictions[i]] += 1;
      fn[labels[i]] += 1;
    }
  }

  if (kind == MetricKind::MacroF1) {
    double sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      const double denom = 2 * tp[c] + fp[c] + fn[c];
      sum += denom > 0 ? 2 * tp[c] / denom : 0.0;  // absent class counts as 0
    }
    return sum / num_classes;
  }

  // Multiclass MCC (reduces to the usual formula for 2 classes).
  const double s = static_cast<double>(n);
  double dot_pt = 0, norm_p = 0, norm_t = 0;
  for (int c = 0; c < num_classes; ++c) {
    dot_pt += pred_count[c] * true_count[c];
    norm_p += pred_count[c] * pred_count[c];
    norm_t += true_count[c] * true_count[c];
  }
  const double numer = correct * s - dot_pt;
  const double denom = std::sqrt(s * s - norm_p) * std::sqrt(s * s - norm_t);
  return denom > 0 ? numer / denom : 0.0;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label") {
    throw std::runtime_error("load_csv: header must be f0,...,label");
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[i] != "f" + std::to_string(i)) {
      throw std::runtime_error("load_csv: unexpected header column '" + header[i] + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      try {
        if (col <= dim) {
          values.push_back(std::stod(cell));
        } else {
          const int y = std::stoi(cell);
          if (y < 0) throw std::invalid_argument("negative");
          labels.push_back(y);
        }
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: parse failure at row " + std::to_string(row) +
                                 ", column " + std::to_string(col));
      }
    }
    if (col != dim + 1) {
      throw std::runtime_error("load_csv: wrong field count at row " + std::to_string(row));
    }
  }
  if (labels.empty()) throw std::runtime_error("load_csv: no data rows in " + path);

  Dataset ds;
  ds.name = path;
  ds.num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  ds.num_classes = std::max(ds.num_classes, 2);
  ds.train.features = Matrix(labels.size(), dim, std::move(values));
  ds.train.labels = std::move(labels);
  return ds;
}

std::string dataset_manifest_json(const Dataset& ds, std::uint64_t seed,
                                  const NoiseConfig& noise) {
  nlohmann::json j{{"name", ds.name},
                   {"num_classes", ds.num_classes},
                   {"input_dim", ds.input_dim()},
                   {"sizes",
                    {{"train", ds.train.size()}, {"dev", ds.dev.size()},
                     {"heldout", ds.heldout.size()}}},
                   {"seed", seed},
                   {"noise", {{"p", noise.p}, {"seed", noise.seed}}}};
  return j.dump(2);
}

}  // namespace rcl
