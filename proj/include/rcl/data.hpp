#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcl/matrix.hpp"

namespace rcl {

struct Split {
  Matrix features;          // N x input_dim
  std::vector<int> labels;  // N entries in [0, num_classes)

  std::size_t size() const { return labels.size(); }
};

struct Dataset {
  std::string name;
  int num_classes = 2;
  Split train;
  Split dev;
  Split heldout;

  std::size_t input_dim() const { return train.features.cols(); }
  void validate() const;  // label range + nonempty splits
};

struct NoiseConfig {
  double p = 0.0;  // flip probability in [0, 1]
  std::uint64_t seed = 0;
};

struct TeacherTaskConfig {
  std::uint64_t seed = 0;
  std::size_t input_dim = 16;
  std::size_t world_hidden_dim = 16;
  std::size_t world_layers = 2;
  int num_classes = 2;
  std::size_t n_train = 2000;
  std::size_t n_dev = 500;
  std::size_t n_heldout = 500;
};

// Synthetic task family: a frozen random "world" encoder maps shared inputs
// to features; every task labels the same inputs with its own random linear
// head (argmax over per-class scores). Heads that leave one class with more
// than 90% of the samples are redrawn. Task 0 is the main task.
std::vector<Dataset> gen_teacher_tasks(const TeacherTaskConfig& config, std::size_t num_tasks);

// Each train label is kept with probability 1-p, otherwise replaced by a
// uniform draw from the other classes. Features and dev/heldout are untouched.
Dataset inject_label_noise(const Dataset& ds, const NoiseConfig& cfg);

// Deterministic train subset: a seeded permutation prefix, so the subsets for
// growing n are nested and identical across methods.
Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed);

enum class MetricKind { Accuracy, MacroF1, MicroF1, Mcc };

std::string metric_name(MetricKind kind);
MetricKind metric_from_name(const std::string& name);

double metric(const std::vector<int>& predictions, const std::vector<int>& labels,
              MetricKind kind);

// CSV with header f0,f1,...,label. The whole file lands in `train`; use
// subsample/split helpers for anything else. Parse errors report row/column.
Dataset load_csv(const std::string& path);

std::string dataset_manifest_json(const Dataset& ds, std::uint64_t seed, const NoiseConfig& noise);

}  // namespace rcl
