#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rcl/data.hpp"
#include "rcl/net.hpp"
#include "rcl/regularize.hpp"

namespace rcl {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;  // not stated in the optimizer conventions; configurable
  bool bias_correction = true;
};

// Decoupled-weight-decay Adam over an arbitrary segment view. Weight decay
// skips bias-tagged segments.
class AdamW {
 public:
  AdamW(const AdamWConfig& config, std::size_t flat_size);

  void step(std::vector<ParameterSnapshot::Segment> params,
            std::vector<ParameterSnapshot::Segment> grads, double learning_rate);

  std::size_t steps_taken() const { return t_; }

 private:
  AdamWConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;  // desk-scale default; 2e-5 remains available
  AdamWConfig optimizer;
  RegularizerSpec regularizer;
  MetricKind metric = MetricKind::Accuracy;
  std::uint64_t seed = 0;
  bool apply_epoch_rule = false;  // 3 epochs at >=10k train points, 2 at >100k
  double failed_margin = 0.02;

  std::size_t effective_epochs(std::size_t train_size) const;
};

struct TrainingRun {
  EncoderConfig model_config;
  ParameterSnapshot theta_fin;
  ParameterSnapshot theta_pre;  // fine-tune starting point (frozen reference)
  std::vector<double> train_loss_by_epoch;
  std::vector<double> train_metric_by_epoch;
  std::vector<double> dev_metric_by_epoch;
  double dev_metric = 0.0;
  double heldout_metric = 0.0;
  bool failed = false;
  std::size_t steps = 0;
  TrainConfig config;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

struct PretrainConfig {
  EncoderConfig encoder;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  AdamWConfig optimizer;
};

// Desk analog of the pre-trained checkpoint: the encoder is trained jointly
// on several teacher tasks (one linear head per task) so its representations
// stay linearly informative for all of them. The returned model carries a
// fresh untrained head.
EncoderModel pretrain(const PretrainConfig& config, const std::vector<Dataset>& teacher_tasks);

// Fine-tunes a copy of `pre` on ds.train with L_total = L_CE + lambda * L_reg
// and AdamW updates; `pre` itself is never mutated. A fresh classification
// head is drawn from cfg.seed. Aborts with a diagnostic on NaN loss.
TrainingRun finetune(const EncoderModel& pre, const Dataset& ds, const TrainConfig& cfg);

// Mean metric of argmax predictions over a split.
double evaluate(const EncoderModel& model, const Split& split, MetricKind kind);

// Majority-class constant predictor evaluated on the same split/metric.
double majority_baseline(const Dataset& ds, const Split& split, MetricKind kind);

// True iff the heldout metric is within `margin` of (or below) the
// majority-class baseline; `<=` is inclusive at the boundary.
bool detect_failed(double heldout_metric, const Dataset& ds, MetricKind kind, double margin);

}  // namespace rcl
