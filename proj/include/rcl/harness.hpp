#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcl/collapse.hpp"
#include "rcl/data.hpp"
#include "rcl/net.hpp"
#include "rcl/train.hpp"

namespace rcl {

// One experiment cell: (task, method, seed, train size, noise level, lambda).
struct ExperimentRecord {
  std::string task;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  double noise_p = 0.0;
  double lambda = 0.0;
  double metric_value = 0.0;
  bool failed = false;
};

struct RankReport {
  struct MethodStats {
    std::string method;
    double mean_metric = 0.0;
    double average_rank = 0.0;
    double filtered_fraction = 0.0;  // share of this method's runs flagged failed
  };
  std::vector<MethodStats> methods;
  bool filter_failed = false;
  std::size_t num_groups = 0;  // ranking columns: distinct (task, size, p)
};

struct MethodSpec {
  std::string name;
  RegularizerSpec reg;
  std::vector<double> lambda_grid;  // empty: use reg.lambda as-is

  static MethodSpec preset(const std::string& name);  // paper grids baked in
};

// Everything the sweeps share: the frozen pre-trained model, the task list,
// and the training defaults.
struct HarnessContext {
  EncoderModel pretrained;
  std::vector<Dataset> tasks;
  TrainConfig base_train;
  std::uint64_t noise_seed = 1234;  // corruption stream, shared across methods
  std::uint64_t subset_seed = 99;   // few-sample subset choice, shared across methods
  std::size_t parallel = 1;         // concurrent cells bound
};

struct ProbeResult {
  double train_metric = 0.0;
  double dev_metric = 0.0;
};

// Freezes the encoder, trains a fresh linear head on task_b.train
// representations, reports the dev metric.
ProbeResult probe(const EncoderModel& model, const Dataset& task_b, std::size_t epochs,
                  std::uint64_t seed, MetricKind kind);

// Heldout-driven grid search; ties resolve to the smaller lambda. Never
// touches the dev split.
double lambda_select(const HarnessContext& ctx, const Dataset& ds, const MethodSpec& method,
                     std::uint64_t seed);

// Full factorial over (task, method, seed, p). For a fixed (task, seed, p)
// every method sees the identical corrupted label vector.
std::vector<ExperimentRecord> noise_sweep(const HarnessContext& ctx,
                                          const std::vector<MethodSpec>& methods,
                                          const std::vector<double>& p_grid,
                                          const std::vector<std::uint64_t>& seeds);

// Few-sample sweep; size 0 means the full train split. The same (task, size)
// subset is used for every method and seed.
std::vector<ExperimentRecord> size_sweep(const HarnessContext& ctx,
                                         const std::vector<MethodSpec>& methods,
                                         const std::vector<std::size_t>& sizes,
                                         const std::vector<std::uint64_t>& seeds);

// Fine-tunes each (method, seed), emits the dev-set spectrum of the
// final-layer representations. Also returns the matching records.
struct CollapseResult {
  std::vector<ExperimentRecord> records;
  // One spectrum per record, same order.
  std::vector<SpectrumReport> spectra;
};
CollapseResult collapse_sweep(const HarnessContext& ctx, const std::vector<MethodSpec>& methods,
                              const std::vector<std::uint64_t>& seeds, std::size_t train_size);

// Mean-over-seeds values per (task, size, p) group are ranked per group with
// the average-rank tie convention; the report averages ranks over groups.
RankReport aggregate(const std::vector<ExperimentRecord>& records, bool filter_failed);

// Deterministic order: (task, method, size, p, lambda, seed).
void sort_records(std::vector<ExperimentRecord>& records);

std::string records_csv(const std::vector<ExperimentRecord>& records);
std::string rank_report_csv(const RankReport& report);
std::string rank_report_json(const RankReport& report);

// Per-figure plot data: top-k eigenvalue bars per method (seed means), and
// noise-level versus mean-metric curves.
std::string eigenvalue_bars_csv(const CollapseResult& result, std::size_t top_k);
std::string noise_curves_csv(const std::vector<ExperimentRecord>& records);

}  // namespace rcl
