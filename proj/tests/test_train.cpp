#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcl/data.hpp"
#include "rcl/net.hpp"
#include "rcl/train.hpp"

using rcl::Dataset;
using rcl::EncoderModel;
using rcl::Matrix;
using rcl::TrainConfig;

namespace {

rcl::TeacherTaskConfig tiny_gen(std::uint64_t seed) {
  rcl::TeacherTaskConfig cfg;
  cfg.seed = seed;
  cfg.input_dim = 6;
  cfg.world_hidden_dim = 8;
  cfg.world_layers = 2;
  cfg.num_classes = 2;
  cfg.n_train = 120;
  cfg.n_dev = 40;
  cfg.n_heldout = 40;
  return cfg;
}

rcl::PretrainConfig tiny_pretrain(std::uint64_t seed) {
  rcl::PretrainConfig cfg;
  cfg.encoder.input_dim = 6;
  cfg.encoder.hidden_dim = 8;
  cfg.encoder.num_layers = 2;
  cfg.encoder.num_classes = 2;
  cfg.encoder.seed = seed;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  return cfg;
}

TrainConfig fast_train(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 5e-3;
  cfg.seed = seed;
  return cfg;
}

bool snapshots_equal(const rcl::ParameterSnapshot& a, const rcl::ParameterSnapshot& b) {
  return a == b;
}

}  // namespace

TEST_CASE("AdamW first step matches the bias-corrected closed form") {
  rcl::AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  rcl::AdamW opt(cfg, 1);

  double param = 1.0;
  double grad = 0.3;
  std::vector<rcl::ParameterSnapshot::Segment> p{{&param, 1, false}};
  std::vector<rcl::ParameterSnapshot::Segment> g{{&grad, 1, false}};
  opt.step(p, g, 0.1);
  // After bias correction, m_hat = g and v_hat = g^2 at t = 1.
  const double expected = 1.0 - 0.1 * grad / (std::abs(grad) + cfg.epsilon);
  CHECK(param == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("AdamW trajectory matches a handwritten single-parameter simulation") {
  rcl::AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  rcl::AdamW opt(cfg, 1);

  double param = 2.0;
  double sim_param = 2.0, m = 0.0, v = 0.0;
  const double lr = 0.05;
  const std::vector<double> grads = {0.5, -1.25, 0.0, 2.0, 0.3};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    double grad = grads[t - 1];
    std::vector<rcl::ParameterSnapshot::Segment> p{{&param, 1, false}};
    std::vector<rcl::ParameterSnapshot::Segment> g{{&grad, 1, false}};
    opt.step(p, g, lr);

    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double m_hat = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    sim_param -= lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + 0.01 * sim_param);
    CHECK(param == doctest::Approx(sim_param).epsilon(1e-12));
  }
}

TEST_CASE("AdamW skips weight decay on bias segments") {
  rcl::AdamWConfig cfg;
  cfg.weight_decay = 1.0;
  rcl::AdamW opt(cfg, 2);
  double weight = 1.0, bias = 1.0;
  double gw = 0.0, gb = 0.0;  // zero gradients isolate the decay term
  std::vector<rcl::ParameterSnapshot::Segment> p{{&weight, 1, false}, {&bias, 1, true}};
  std::vector<rcl::ParameterSnapshot::Segment> g{{&gw, 1, false}, {&gb, 1, true}};
  opt.step(p, g, 0.1);
  CHECK(weight == doctest::Approx(0.9));
  CHECK(bias == doctest::Approx(1.0));
}

TEST_CASE("epoch rule caps epochs for large training sets") {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.apply_epoch_rule = true;
  CHECK(cfg.effective_epochs(500) == 5);
  CHECK(cfg.effective_epochs(10000) == 3);
  CHECK(cfg.effective_epochs(100001) == 2);
  cfg.apply_epoch_rule = false;
  CHECK(cfg.effective_epochs(100001) == 5);
}

TEST_CASE("pretrain: determinism and zero-epoch identity") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(3), 3);
  const std::vector<Dataset> aux = {tasks[1], tasks[2]};

  const EncoderModel a = rcl::pretrain(tiny_pretrain(5), aux);
  const EncoderModel b = rcl::pretrain(tiny_pretrain(5), aux);
  CHECK(snapshots_equal(a.params, b.params));

  rcl::PretrainConfig zero = tiny_pretrain(5);
  zero.epochs = 0;
  const EncoderModel untrained = rcl::pretrain(zero, aux);
  const EncoderModel glorot = rcl::init(zero.encoder);
  CHECK(snapshots_equal(untrained.params, glorot.params));

  CHECK_THROWS(rcl::pretrain(tiny_pretrain(5), {tasks[0]}));
}

TEST_CASE("finetune: determinism and the frozen reference is untouched") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(7), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(9), {tasks[1], tasks[2]});
  const rcl::ParameterSnapshot pre_before = rcl::snapshot(pre);

  const auto run1 = rcl::finetune(pre, tasks[0], fast_train(11));
  const auto run2 = rcl::finetune(pre, tasks[0], fast_train(11));
  CHECK(snapshots_equal(run1.theta_fin, run2.theta_fin));
  CHECK(run1.dev_metric == run2.dev_metric);
  CHECK(run1.heldout_metric == run2.heldout_metric);
  CHECK(run1.train_loss_by_epoch == run2.train_loss_by_epoch);
  CHECK(snapshots_equal(pre.params, pre_before));  // never mutated

  // Different seed: different head draw, different trajectory.
  const auto run3 = rcl::finetune(pre, tasks[0], fast_train(12));
  CHECK(!snapshots_equal(run3.theta_fin, run1.theta_fin));
}

TEST_CASE("finetune: lambda 0 is bitwise identical to kind None") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(13), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(15), {tasks[1], tasks[2]});

  TrainConfig none = fast_train(17);
  none.regularizer.kind = rcl::RegKind::None;

  for (rcl::RegKind kind : {rcl::RegKind::CapcortI, rcl::RegKind::CapcortMlp,
                            rcl::RegKind::WeightConsolidation, rcl::RegKind::R3F,
                            rcl::RegKind::DataAugment}) {
    TrainConfig off = fast_train(17);
    off.regularizer.kind = kind;
    off.regularizer.lambda = 0.0;
    const auto base = rcl::finetune(pre, tasks[0], none);
    const auto gated = rcl::finetune(pre, tasks[0], off);
    CHECK(snapshots_equal(base.theta_fin, gated.theta_fin));
    CHECK(base.train_loss_by_epoch == gated.train_loss_by_epoch);
  }
}

TEST_CASE("finetune: training reduces the loss on separable synthetic data") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(19), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(21), {tasks[1], tasks[2]});

  TrainConfig cfg = fast_train(23);
  cfg.epochs = 5;
  const auto run = rcl::finetune(pre, tasks[0], cfg);
  CHECK(run.train_loss_by_epoch.back() < run.train_loss_by_epoch.front());
  CHECK(run.train_metric_by_epoch.back() > 0.6);
  CHECK(run.steps == 5 * ((120 + 7) / 8));
}

TEST_CASE("finetune: huge capcort lambda pins representations to the frozen reference") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(29), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(31), {tasks[1], tasks[2]});

  auto drift = [&](double lambda) {
    TrainConfig cfg = fast_train(33);
    cfg.epochs = 5;
    cfg.regularizer.kind = rcl::RegKind::CapcortI;
    cfg.regularizer.lambda = lambda;
    const auto run = rcl::finetune(pre, tasks[0], cfg);
    const EncoderModel tuned{run.model_config, run.theta_fin};
    const std::size_t L = pre.config.num_layers;
    const Matrix z_fin = rcl::representations(tuned, tasks[0].train.features, L);
    const Matrix z_pre = rcl::representations(pre, tasks[0].train.features, L);
    return std::sqrt(rcl::frobenius_sq(z_fin - z_pre));
  };

  CHECK(drift(1e6) < drift(0.5));
}

TEST_CASE("finetune: every regularizer kind runs and stays finite") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(37), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(39), {tasks[1], tasks[2]});

  auto run_kind = [&](rcl::RegKind kind, double lambda) {
    TrainConfig cfg = fast_train(41);
    cfg.regularizer.kind = kind;
    cfg.regularizer.lambda = lambda;
    if (kind == rcl::RegKind::Reinit) cfg.regularizer.reinit_k = 1;
    if (kind == rcl::RegKind::MeSCL) {
      cfg.regularizer.temperature = 1.0;
      cfg.regularizer.center_updates = 3;
    }
    const auto run = rcl::finetune(pre, tasks[0], cfg);
    CHECK(std::isfinite(run.dev_metric));
    CHECK(std::isfinite(run.heldout_metric));
    for (double v : run.train_loss_by_epoch) CHECK(std::isfinite(v));
    return run;
  };

  run_kind(rcl::RegKind::CapcortI, 0.1);
  run_kind(rcl::RegKind::CapcortMlp, 0.1);
  run_kind(rcl::RegKind::WeightConsolidation, 0.1);
  run_kind(rcl::RegKind::R3F, 0.5);
  run_kind(rcl::RegKind::DataAugment, 0.4);
  run_kind(rcl::RegKind::Reinit, 0.0);
  const auto scl = run_kind(rcl::RegKind::MeSCL, 0.7);
  CHECK(scl.steps > 0);
}

TEST_CASE("finetune: capcort-i on an intermediate layer stays closer there") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(43), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(45), {tasks[1], tasks[2]});

  TrainConfig cfg = fast_train(47);
  cfg.regularizer.kind = rcl::RegKind::CapcortI;
  cfg.regularizer.lambda = 100.0;
  cfg.regularizer.layer = 1;
  const auto run = rcl::finetune(pre, tasks[0], cfg);

  TrainConfig plain = fast_train(47);
  const auto base = rcl::finetune(pre, tasks[0], plain);

  const EncoderModel tuned{run.model_config, run.theta_fin};
  const EncoderModel base_model{base.model_config, base.theta_fin};
  const Matrix z_pre = rcl::representations(pre, tasks[0].train.features, 1);
  const double reg_drift =
      rcl::frobenius_sq(rcl::representations(tuned, tasks[0].train.features, 1) - z_pre);
  const double base_drift =
      rcl::frobenius_sq(rcl::representations(base_model, tasks[0].train.features, 1) - z_pre);
  CHECK(reg_drift < base_drift);
}

TEST_CASE("detect_failed: perfect, constant and boundary runs") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(49), 1);
  const Dataset& ds = tasks[0];
  const double baseline = rcl::majority_baseline(ds, ds.heldout, rcl::MetricKind::Accuracy);

  CHECK(rcl::detect_failed(1.0, ds, rcl::MetricKind::Accuracy, 0.02) == false);
  CHECK(rcl::detect_failed(baseline, ds, rcl::MetricKind::Accuracy, 0.02) == true);
  // Exactly at the margin: <= is inclusive.
  CHECK(rcl::detect_failed(baseline + 0.02, ds, rcl::MetricKind::Accuracy, 0.02) == true);
  CHECK(rcl::detect_failed(baseline + 0.02 + 1e-9, ds, rcl::MetricKind::Accuracy, 0.02) ==
        false);
}

TEST_CASE("finetune aborts with a diagnostic on non-finite loss") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(53), 3);
  rcl::PretrainConfig pc = tiny_pretrain(55);
  pc.encoder.activation = rcl::Activation::Relu;
  pc.epochs = 0;
  const EncoderModel pre = rcl::pretrain(pc, {tasks[1], tasks[2]});

  TrainConfig cfg = fast_train(57);
  cfg.learning_rate = 1e18;  // relu activations overflow within an epoch
  cfg.epochs = 2;
  try {
    rcl::finetune(pre, tasks[0], cfg);
    // Overflow is expected but not guaranteed on every platform; if the run
    // survives, its metrics must still be finite.
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite loss") != std::string::npos);
    CHECK(msg.find("epoch") != std::string::npos);
  }
}

TEST_CASE("heldout metric stays finite across every paper lambda grid") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(67), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(69), {tasks[1], tasks[2]});

  for (rcl::RegKind kind : {rcl::RegKind::CapcortI, rcl::RegKind::CapcortMlp,
                            rcl::RegKind::WeightConsolidation, rcl::RegKind::R3F,
                            rcl::RegKind::DataAugment, rcl::RegKind::MeSCL}) {
    for (double lambda : rcl::default_lambda_grid(kind)) {
      TrainConfig cfg = fast_train(71);
      cfg.epochs = 2;
      cfg.regularizer.kind = kind;
      cfg.regularizer.lambda = lambda;
      const auto run = rcl::finetune(pre, tasks[0], cfg);
      CHECK(std::isfinite(run.heldout_metric));
      CHECK(std::isfinite(run.dev_metric));
    }
  }
}

TEST_CASE("training run serializes to JSON with config echo") {
  const auto tasks = rcl::gen_teacher_tasks(tiny_gen(59), 3);
  const EncoderModel pre = rcl::pretrain(tiny_pretrain(61), {tasks[1], tasks[2]});
  TrainConfig cfg = fast_train(63);
  cfg.regularizer.kind = rcl::RegKind::CapcortI;
  cfg.regularizer.lambda = 0.05;
  const auto run = rcl::finetune(pre, tasks[0], cfg);
  const std::string json = run.to_json();
  CHECK(json.find("\"kind\": \"capcort_i\"") != std::string::npos);
  CHECK(json.find("\"lambda\": 0.05") != std::string::npos);
  CHECK(json.find("heldout_metric") != std::string::npos);
}
