#include "rcl/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "rcl/rng.hpp"

namespace rcl {

AdamW::AdamW(const AdamWConfig& config, std::size_t flat_size)
    : config_(config), m_(flat_size, 0.0), v_(flat_size, 0.0) {}

void AdamW::step(std::vector<ParameterSnapshot::Segment> params,
                 std::vector<ParameterSnapshot::Segment> grads, double learning_rate) {
  ++t_;
  const double bc1 =
      config_.bias_correction ? 1.0 - std::pow(config_.beta1, static_cast<double>(t_)) : 1.0;
  const double bc2 =
      config_.bias_correction ? 1.0 - std::pow(config_.beta2, static_cast<double>(t_)) : 1.0;

  std::size_t offset = 0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    double* p = params[s].data;
    const double* g = grads[s].data;
    for (std::size_t i = 0; i < params[s].len; ++i, ++offset) {
      m_[offset] = config_.beta1 * m_[offset] + (1.0 - config_.beta1) * g[i];
      v_[offset] = config_.beta2 * v_[offset] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m_[offset] / bc1;
      const double v_hat = v_[offset] / bc2;
      double update = m_hat / (std::sqrt(v_hat) + config_.epsilon);
      if (!params[s].is_bias) update += config_.weight_decay * p[i];
      p[i] -= learning_rate * update;
    }
  }
  if (offset != m_.size()) throw std::invalid_argument("AdamW::step: parameter size mismatch");
}

std::size_t TrainConfig::effective_epochs(std::size_t train_size) const {
  if (!apply_epoch_rule) return epochs;
  if (train_size > 100000) return std::min<std::size_t>(epochs, 2);
  if (train_size >= 10000) return std::min<std::size_t>(epochs, 3);
  return epochs;
}

namespace {

std::vector<int> predict(const EncoderModel& model, const Split& split) {
  std::vector<int> preds(split.size());
  for (std::size_t j = 0; j < split.size(); ++j) {
    const ForwardTrace trace = forward(model, split.features.row(j));
    preds[j] = static_cast<int>(std::max_element(trace.probs.begin(), trace.probs.end()) -
                                trace.probs.begin());
  }
  return preds;
}

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), src.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    std::copy(src.row(idx[j]), src.row(idx[j]) + src.cols(), out.row(j));
  }
  return out;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
  }
}

void redraw_head(EncoderModel& model, Rng rng) {
  Matrix& w = model.params.head_weight;
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  std::fill(model.params.head_bias.begin(), model.params.head_bias.end(), 0.0);
}

// Regularizers whose lambda multiplies an additive term: lambda = 0 leaves
// plain cross-entropy and must reproduce the None trajectory bitwise.
bool lambda_gates_off(RegKind kind) {
  switch (kind) {
    case RegKind::CapcortI:
    case RegKind::CapcortMlp:
    case RegKind::WeightConsolidation:
    case RegKind::R3F:
    case RegKind::DataAugment:
      return true;
    default:
      return false;
  }
}

}  // namespace

double evaluate(const EncoderModel& model, const Split& split, MetricKind kind) {
  return metric(predict(model, split), split.labels, kind);
}

double majority_baseline(const Dataset& ds, const Split& split, MetricKind kind) {
  std::vector<std::size_t> counts(ds.num_classes, 0);
  for (int y : ds.train.labels) counts[y]++;
  const int majority = static_cast<int>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  const std::vector<int> preds(split.size(), majority);
  return metric(preds, split.labels, kind);
}

bool detect_failed(double heldout_metric, const Dataset& ds, MetricKind kind, double margin) {
  return heldout_metric <= majority_baseline(ds, ds.heldout, kind) + margin;
}

EncoderModel pretrain(const PretrainConfig& config, const std::vector<Dataset>& teacher_tasks) {
  if (teacher_tasks.size() < 2) {
    throw std::invalid_argument("pretrain: need at least 2 teacher tasks");
  }
  EncoderModel model = init(config.encoder);

  // One classification head per task; the shared encoder receives gradient
  // from all of them.
  struct TaskHead {
    Matrix weight;
    std::vector<double> bias;
  };
  std::vector<TaskHead> heads;
  Rng root(config.encoder.seed);
  for (std::size_t t = 0; t < teacher_tasks.size(); ++t) {
    const std::size_t classes = static_cast<std::size_t>(teacher_tasks[t].num_classes);
    TaskHead head;
    head.weight = Matrix(classes, config.encoder.hidden_dim);
    Rng rng = root.fork(1000 + t);
    const double bound =
        std::sqrt(6.0 / static_cast<double>(classes + config.encoder.hidden_dim));
    for (std::size_t i = 0; i < head.weight.size(); ++i) {
      head.weight.data()[i] = rng.uniform(-bound, bound);
    }
    head.bias.assign(classes, 0.0);
    heads.push_back(std::move(head));
  }

  const std::size_t L = config.encoder.num_layers;
  AdamW encoder_opt(config.optimizer, snapshot(model).flat_size());
  std::vector<AdamW> head_opts;
  for (auto& head : heads) {
    head_opts.emplace_back(config.optimizer, head.weight.size() + head.bias.size());
  }

  Rng shuffle_rng = root.fork(2000);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> orders(teacher_tasks.size());
    std::size_t max_batches = 0;
    for (std::size_t t = 0; t < teacher_tasks.size(); ++t) {
      orders[t].resize(teacher_tasks[t].train.size());
      std::iota(orders[t].begin(), orders[t].end(), std::size_t{0});
      Rng r = shuffle_rng.fork(epoch * 97 + t);
      shuffle_indices(orders[t], r);
      max_batches = std::max(
          max_batches, (orders[t].size() + config.batch_size - 1) / config.batch_size);
    }

    for (std::size_t b = 0; b < max_batches; ++b) {
      for (std::size_t t = 0; t < teacher_tasks.size(); ++t) {
        const auto& task = teacher_tasks[t];
        const std::size_t begin = b * config.batch_size % orders[t].size();
        const std::size_t count = std::min(config.batch_size, orders[t].size() - begin);
        if (count == 0) continue;

        ParameterSnapshot grads = zeros_like(model);
        Matrix head_wgrad(heads[t].weight.rows(), heads[t].weight.cols());
        std::vector<double> head_bgrad(heads[t].bias.size(), 0.0);

        for (std::size_t s = 0; s < count; ++s) {
          const std::size_t idx = orders[t][begin + s];
          const ForwardTrace trace = forward(model, task.train.features.row(idx));
          const auto& h = trace.representation(L);

          // Task head on top of the shared encoder.
          std::vector<double> logits(heads[t].bias);
          for (std::size_t c = 0; c < logits.size(); ++c) {
            const double* wrow = heads[t].weight.row(c);
            for (std::size_t k = 0; k < h.size(); ++k) logits[c] += wrow[k] * h[k];
          }
          const std::vector<double> probs = softmax(logits);
          const std::vector<double> dlogits =
              cross_entropy_dlogits(probs, task.train.labels[idx]);

          std::vector<double> dh(h.size(), 0.0);
          for (std::size_t c = 0; c < dlogits.size(); ++c) {
            head_bgrad[c] += dlogits[c];
            double* gw = head_wgrad.row(c);
            const double* wrow = heads[t].weight.row(c);
            for (std::size_t k = 0; k < h.size(); ++k) {
              gw[k] += dlogits[c] * h[k];
              dh[k] += dlogits[c] * wrow[k];
            }
          }
          BackSignal signal;
          signal.layer_grads.emplace_back(L, std::move(dh));
          backprop_sample(model, task.train.features.row(idx), trace, signal, grads);
        }

        encoder_opt.step(model.params.segments(), grads.segments(), config.learning_rate);
        std::vector<ParameterSnapshot::Segment> head_params{
            {heads[t].weight.data(), heads[t].weight.size(), false},
            {heads[t].bias.data(), heads[t].bias.size(), true}};
        std::vector<ParameterSnapshot::Segment> head_grads{
            {head_wgrad.data(), head_wgrad.size(), false},
            {head_bgrad.data(), head_bgrad.size(), true}};
        head_opts[t].step(head_params, head_grads, config.learning_rate);
      }
    }
  }
  return model;
}

TrainingRun finetune(const EncoderModel& pre, const Dataset& ds, const TrainConfig& cfg) {
  cfg.regularizer.validate(pre.config.num_layers);
  if (ds.train.features.cols() != pre.config.input_dim) {
    throw std::invalid_argument("finetune: dataset dimension mismatch");
  }
  if (static_cast<std::size_t>(ds.num_classes) != pre.config.num_classes) {
    throw std::invalid_argument("finetune: dataset class count mismatch");
  }

  const RegularizerSpec& reg = cfg.regularizer;
  const bool reg_active =
      reg.kind != RegKind::None && !(lambda_gates_off(reg.kind) && reg.lambda == 0.0);
  const std::size_t L = pre.config.num_layers;
  // The representation tap: CAPCORT-I may target an intermediate layer;
  // everything else works on the top-layer representations.
  const std::size_t cap_layer =
      reg.kind == RegKind::CapcortI ? reg.resolved_layer(L) : L;

  Rng root(cfg.seed);
  EncoderModel model = pre;
  redraw_head(model, root.fork(1));
  if (reg_active && reg.kind == RegKind::Reinit) {
    Rng reinit_rng = root.fork(2);
    reinit_top_k(model, reg.reinit_k, reinit_rng);
  }

  TrainingRun run;
  run.config = cfg;
  run.model_config = model.config;
  run.theta_pre = snapshot(model);  // frozen reference: fine-tune starting point

  // Frozen pre-trained encoder for representation targets (head irrelevant).
  const EncoderModel frozen = model;

  MlpHead phi;
  std::optional<AdamW> phi_opt;
  if (reg_active && reg.kind == RegKind::CapcortMlp) {
    phi = MlpHead::glorot(pre.config.hidden_dim, reg.mlp_depth, root.fork(3).seed());
    std::size_t phi_size = 0;
    for (const auto& seg : phi.segments()) phi_size += seg.len;
    phi_opt.emplace(cfg.optimizer, phi_size);
  }

  const std::size_t n = ds.train.size();
  const std::size_t epochs = cfg.effective_epochs(n);
  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = std::max<std::size_t>(1, epochs * batches_per_epoch);

  // MeSCL refresh points: exactly center_updates refreshes, evenly spaced.
  SclState scl;
  std::set<std::size_t> refresh_steps;
  if (reg_active && reg.kind == RegKind::MeSCL) {
    for (std::size_t i = 0; i < reg.center_updates; ++i) {
      refresh_steps.insert(i * total_steps / reg.center_updates);
    }
  }

  AdamW opt(cfg.optimizer, run.theta_pre.flat_size());
  Rng shuffle_rng = root.fork(4);
  Rng noise_rng = root.fork(5);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t step = 0;
  bool scl_warned = false;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng epoch_rng = shuffle_rng.fork(epoch);
    shuffle_indices(order, epoch_rng);
    double epoch_loss = 0.0;

    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      std::vector<std::size_t> batch_idx(order.begin() + begin, order.begin() + begin + count);
      const Matrix batch_x = gather_rows(ds.train.features, batch_idx);
      std::vector<int> batch_y(count);
      for (std::size_t s = 0; s < count; ++s) batch_y[s] = ds.train.labels[batch_idx[s]];

      if (reg_active && reg.kind == RegKind::MeSCL && refresh_steps.count(step)) {
        scl.refresh(representations(model, ds.train.features, L), ds.train.labels,
                    ds.num_classes);
      }

      double batch_loss = 0.0;
      ParameterSnapshot grads = zeros_like(model);

      if (reg_active && reg.kind == RegKind::DataAugment) {
        // DA subsumes the cross-entropy term.
        ModelLossGrad da = da_loss(model, batch_x, batch_y, reg.lambda, reg.noise_delta,
                                   noise_rng);
        batch_loss += da.loss;
        grads = std::move(da.grads);
      } else {
        // Forward every batch sample once; reuse traces for CE and for the
        // representation-space terms.
        std::vector<ForwardTrace> traces(count);
        Matrix z_fin(count, pre.config.hidden_dim);
        for (std::size_t s = 0; s < count; ++s) {
          traces[s] = forward(model, batch_x.row(s));
          const auto& h = traces[s].representation(cap_layer);
          std::copy(h.begin(), h.end(), z_fin.row(s));
        }

        const double ce_weight = reg_active && reg.kind == RegKind::MeSCL ? reg.lambda : 1.0;
        Matrix rep_grad;  // dL/dh at the tap layer, unscaled
        double rep_weight = 0.0;
        const std::size_t rep_layer = cap_layer;

        if (reg_active) {
          switch (reg.kind) {
            case RegKind::CapcortI: {
              const Matrix z_pre =
                  representations(frozen, batch_x, cap_layer);  // extra frozen forward
              RepLossGrad r = capcort_i_loss(z_fin, z_pre);
              batch_loss += reg.lambda * r.loss;
              rep_grad = std::move(r.dz_fin);
              rep_weight = reg.lambda;
              break;
            }
            case RegKind::CapcortMlp: {
              const Matrix z_pre = representations(frozen, batch_x, cap_layer);
              MlpLossGrad r = capcort_mlp_loss(z_fin, z_pre, phi);
              batch_loss += reg.lambda * r.loss;
              rep_grad = std::move(r.dz_fin);
              rep_weight = reg.lambda;
              // phi trains jointly, same optimizer settings and learning rate.
              for (auto& seg : r.dhead.segments()) {
                for (std::size_t i = 0; i < seg.len; ++i) seg.data[i] *= reg.lambda;
              }
              phi_opt->step(phi.segments(), r.dhead.segments(), cfg.learning_rate);
              break;
            }
            case RegKind::WeightConsolidation: {
              WcLossGrad r = wc_loss(model.params, run.theta_pre);
              batch_loss += reg.lambda * r.loss;
              const auto gsegs = grads.segments();
              const auto rsegs = r.grad.segments();
              for (std::size_t s = 0; s < gsegs.size(); ++s) {
                for (std::size_t i = 0; i < gsegs[s].len; ++i) {
                  gsegs[s].data[i] += reg.lambda * rsegs[s].data[i];
                }
              }
              break;
            }
            case RegKind::R3F: {
              ModelLossGrad r = r3f_loss(model, batch_x, reg.noise_delta, noise_rng);
              batch_loss += reg.lambda * r.loss;
              const auto gsegs = grads.segments();
              const auto rsegs = r.grads.segments();
              for (std::size_t s = 0; s < gsegs.size(); ++s) {
                for (std::size_t i = 0; i < gsegs[s].len; ++i) {
                  gsegs[s].data[i] += reg.lambda * rsegs[s].data[i];
                }
              }
              break;
            }
            case RegKind::MeSCL: {
              if (scl.active_classes.size() >= 2) {
                RepLossGrad r = mescl_loss(z_fin, batch_y, scl, reg.temperature);
                batch_loss += (1.0 - reg.lambda) * r.loss;
                rep_grad = std::move(r.dz_fin);
                rep_weight = 1.0 - reg.lambda;
              } else if (!scl_warned) {
                run.warnings.push_back("mescl: fewer than 2 active classes; term skipped");
                scl_warned = true;
              }
              break;
            }
            default:
              break;
          }
        }

        for (std::size_t s = 0; s < count; ++s) {
          BackSignal signal;
          batch_loss += ce_weight * cross_entropy(traces[s].probs, batch_y[s]);
          signal.dlogits = cross_entropy_dlogits(traces[s].probs, batch_y[s]);
          for (double& v : signal.dlogits) v *= ce_weight;
          if (rep_weight != 0.0) {
            std::vector<double> dh(rep_grad.row(s), rep_grad.row(s) + rep_grad.cols());
            for (double& v : dh) v *= rep_weight;
            signal.layer_grads.emplace_back(rep_layer, std::move(dh));
          }
          backprop_sample(model, batch_x.row(s), traces[s], signal, grads);
        }
      }

      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("finetune: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(step) + " (" +
                                 reg_kind_name(reg.kind) + ", lambda=" +
                                 std::to_string(reg.lambda) + ")");
      }

      opt.step(model.params.segments(), grads.segments(), cfg.learning_rate);
      epoch_loss += batch_loss;
    }

    run.train_loss_by_epoch.push_back(epoch_loss);
    run.train_metric_by_epoch.push_back(evaluate(model, ds.train, cfg.metric));
    run.dev_metric_by_epoch.push_back(evaluate(model, ds.dev, cfg.metric));
  }

  run.steps = step;
  run.theta_fin = snapshot(model);
  run.dev_metric = run.dev_metric_by_epoch.empty() ? evaluate(model, ds.dev, cfg.metric)
                                                   : run.dev_metric_by_epoch.back();
  run.heldout_metric = evaluate(model, ds.heldout, cfg.metric);
  run.failed = detect_failed(run.heldout_metric, ds, cfg.metric, cfg.failed_margin);
  return run;
}

std::string TrainingRun::to_json() const {
  nlohmann::json j;
  j["config"] = {{"epochs", config.epochs},
                 {"batch_size", config.batch_size},
                 {"learning_rate", config.learning_rate},
                 {"weight_decay", config.optimizer.weight_decay},
                 {"bias_correction", config.optimizer.bias_correction},
                 {"metric", metric_name(config.metric)},
                 {"seed", config.seed},
                 {"regularizer",
                  {{"kind", reg_kind_name(config.regularizer.kind)},
                   {"lambda", config.regularizer.lambda},
                   {"layer", config.regularizer.layer},
                   {"mlp_depth", config.regularizer.mlp_depth},
                   {"noise_delta", config.regularizer.noise_delta},
                   {"temperature", config.regularizer.temperature},
                   {"reinit_k", config.regularizer.reinit_k},
                   {"center_updates", config.regularizer.center_updates}}}};
  j["train_loss_by_epoch"] = train_loss_by_epoch;
  j["train_metric_by_epoch"] = train_metric_by_epoch;
  j["dev_metric_by_epoch"] = dev_metric_by_epoch;
  j["dev_metric"] = dev_metric;
  j["heldout_metric"] = heldout_metric;
  j["failed"] = failed;
  j["steps"] = steps;
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace rcl
