#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rcl/data.hpp"
#include "rcl/harness.hpp"
#include "rcl/net.hpp"
#include "rcl/train.hpp"

namespace rcl {

struct PretrainBlock {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
};

struct ExperimentBlock {
  std::string kind;  // train | probe | noise-sweep | size-sweep | collapse | verify-theory
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir;  // empty: RCL_OUTPUT_DIR or ./out
  std::vector<double> noise_grid = {0.0, 0.05, 0.1, 0.2, 0.3};
  std::vector<std::size_t> sizes = {250, 500, 1000, 0};  // 0 = full train split
  std::size_t train_size = 0;
  std::vector<std::size_t> pretrain_tasks = {1, 2, 3, 4};
  std::size_t probe_task = 5;
  std::size_t probe_epochs = 30;
  std::size_t theory_tasks = 500;
  std::size_t mc_samples = 200000;
};

struct DatasetBlock {
  std::optional<TeacherTaskConfig> generator;
  std::size_t num_tasks = 6;
  std::optional<std::string> csv_path;
};

// The experiment configuration document. Parsing is strict: unknown keys are
// rejected so typos never silently fall back to defaults.
struct RunConfig {
  DatasetBlock dataset;
  EncoderConfig model;
  PretrainBlock pretrain;
  TrainConfig train;
  std::vector<MethodSpec> regularizers;
  ExperimentBlock experiment;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::string& path);
};

}  // namespace rcl
