#include "rcl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rcl/format.hpp"
#include "rcl/parallel.hpp"
#include "rcl/rng.hpp"

namespace rcl {

namespace {

std::uint64_t cell_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return Rng::mix(Rng::mix(Rng::mix(base + a) + b) + c);
}

}  // namespace

MethodSpec MethodSpec::preset(const std::string& name) {
  MethodSpec m;
  m.name = name;
  m.reg.kind = reg_kind_from_name(name == "std++" ? "none" : name);
  m.lambda_grid = default_lambda_grid(m.reg.kind);
  if (m.reg.kind == RegKind::Reinit) {
    m.reg.reinit_k = 1;
    m.lambda_grid.clear();
  }
  if (m.reg.kind == RegKind::None) m.lambda_grid.clear();
  return m;
}

ProbeResult probe(const EncoderModel& model, const Dataset& task_b, std::size_t epochs,
                  std::uint64_t seed, MetricKind kind) {
  const std::size_t L = model.config.num_layers;
  const std::size_t dim = model.config.hidden_dim;
  const std::size_t classes = static_cast<std::size_t>(task_b.num_classes);

  // Encoder frozen: representations are computed once.
  const Matrix train_reps = representations(model, task_b.train.features, L);
  const Matrix dev_reps = representations(model, task_b.dev.features, L);

  Rng root(seed);
  Matrix w(classes, dim);
  std::vector<double> bias(classes, 0.0);
  {
    Rng rng = root.fork(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(classes + dim));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  }

  AdamWConfig opt_cfg;
  AdamW opt(opt_cfg, w.size() + bias.size());
  const std::size_t n = task_b.train.size();
  const std::size_t batch_size = 32;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = root.fork(1);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng epoch_rng = shuffle_rng.fork(epoch);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[epoch_rng.uniform_index(i + 1)]);
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t count = std::min(batch_size, n - begin);
      Matrix gw(classes, dim);
      std::vector<double> gb(classes, 0.0);
      for (std::size_t s = 0; s < count; ++s) {
        const std::size_t idx = order[begin + s];
        std::vector<double> logits(bias);
        for (std::size_t c = 0; c < classes; ++c) {
          const double* wrow = w.row(c);
          for (std::size_t k = 0; k < dim; ++k) logits[c] += wrow[k] * train_reps(idx, k);
        }
        const auto probs = softmax(logits);
        const auto dlogits = cross_entropy_dlogits(probs, task_b.train.labels[idx]);
        for (std::size_t c = 0; c < classes; ++c) {
          gb[c] += dlogits[c];
          double* gwrow = gw.row(c);
          for (std::size_t k = 0; k < dim; ++k) gwrow[k] += dlogits[c] * train_reps(idx, k);
        }
      }
      std::vector<ParameterSnapshot::Segment> params{{w.data(), w.size(), false},
                                                     {bias.data(), bias.size(), true}};
      std::vector<ParameterSnapshot::Segment> grads{{gw.data(), gw.size(), false},
                                                    {gb.data(), gb.size(), true}};
      opt.step(params, grads, 1e-2);
    }
  }

  auto head_predict = [&](const Matrix& reps) {
    std::vector<int> preds(reps.rows());
    for (std::size_t j = 0; j < reps.rows(); ++j) {
      std::size_t best = 0;
      double best_score = -1e300;
      for (std::size_t c = 0; c < classes; ++c) {
        const double* wrow = w.row(c);
        double score = bias[c];
        for (std::size_t k = 0; k < dim; ++k) score += wrow[k] * reps(j, k);
        if (score > best_score) {
          best_score = score;
          best = c;
        }
      }
      preds[j] = static_cast<int>(best);
    }
    return preds;
  };

  ProbeResult out;
  out.train_metric = metric(head_predict(train_reps), task_b.train.labels, kind);
  out.dev_metric = metric(head_predict(dev_reps), task_b.dev.labels, kind);
  return out;
}

double lambda_select(const HarnessContext& ctx, const Dataset& ds, const MethodSpec& method,
                     std::uint64_t seed) {
  if (method.lambda_grid.empty()) return method.reg.lambda;
  double best_lambda = method.lambda_grid.front();
  double best_metric = -1e300;
  for (double lambda : method.lambda_grid) {
    TrainConfig cfg = ctx.base_train;
    cfg.regularizer = method.reg;
    cfg.regularizer.lambda = lambda;
    cfg.seed = seed;
    const TrainingRun run = finetune(ctx.pretrained, ds, cfg);
    // Strictly-greater keeps the smaller lambda on ties.
    if (run.heldout_metric > best_metric) {
      best_metric = run.heldout_metric;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

namespace {

ExperimentRecord run_cell(const HarnessContext& ctx, const Dataset& ds,
                          const std::string& task_name, const MethodSpec& method,
                          std::uint64_t seed, std::size_t size_tag, double noise_p) {
  TrainConfig cfg = ctx.base_train;
  cfg.regularizer = method.reg;
  cfg.seed = seed;
  if (!method.lambda_grid.empty()) {
    cfg.regularizer.lambda = lambda_select(ctx, ds, method, seed);
  }
  const TrainingRun run = finetune(ctx.pretrained, ds, cfg);

  ExperimentRecord record;
  record.task = task_name;
  record.method = method.name;
  record.seed = seed;
  record.train_size = size_tag;
  record.noise_p = noise_p;
  record.lambda = cfg.regularizer.lambda;
  record.metric_value = run.dev_metric;
  record.failed = run.failed;
  return record;
}

}  // namespace

std::vector<ExperimentRecord> noise_sweep(const HarnessContext& ctx,
                                          const std::vector<MethodSpec>& methods,
                                          const std::vector<double>& p_grid,
                                          const std::vector<std::uint64_t>& seeds) {
  if (methods.empty() || p_grid.empty() || seeds.empty()) {
    throw std::invalid_argument("noise_sweep: empty grid");
  }
  // One corruption per (task, p, seed); methods all see the same labels.
  struct Cell {
    const Dataset* ds;
    std::string task;
    const MethodSpec* method;
    std::uint64_t seed;
    double p;
  };
  std::vector<Dataset> noisy_sets;
  std::vector<Cell> cells;
  for (std::size_t t = 0; t < ctx.tasks.size(); ++t) {
    const Dataset& clean = ctx.tasks[t];
    for (std::size_t pi = 0; pi < p_grid.size(); ++pi) {
      for (std::size_t si = 0; si < seeds.size(); ++si) {
        NoiseConfig noise{p_grid[pi], cell_seed(ctx.noise_seed, t, pi, seeds[si])};
        noisy_sets.push_back(inject_label_noise(clean, noise));
      }
    }
  }
  std::size_t variant = 0;
  for (std::size_t t = 0; t < ctx.tasks.size(); ++t) {
    for (std::size_t pi = 0; pi < p_grid.size(); ++pi) {
      for (std::size_t si = 0; si < seeds.size(); ++si, ++variant) {
        for (const MethodSpec& method : methods) {
          cells.push_back({&noisy_sets[variant], ctx.tasks[t].name, &method, seeds[si],
                           p_grid[pi]});
        }
      }
    }
  }

  std::vector<ExperimentRecord> records(cells.size());
  parallel_for(cells.size(), ctx.parallel, [&](std::size_t i) {
    const Cell& c = cells[i];
    records[i] = run_cell(ctx, *c.ds, c.task, *c.method, c.seed, c.ds->train.size(), c.p);
  });
  sort_records(records);
  return records;
}

std::vector<ExperimentRecord> size_sweep(const HarnessContext& ctx,
                                         const std::vector<MethodSpec>& methods,
                                         const std::vector<std::size_t>& sizes,
                                         const std::vector<std::uint64_t>& seeds) {
  if (methods.empty() || sizes.empty() || seeds.empty()) {
    throw std::invalid_argument("size_sweep: empty grid");
  }
  // Same subset for every method and seed; prefixes nest across sizes.
  struct Cell {
    const Dataset* ds;
    std::string task;
    const MethodSpec* method;
    std::uint64_t seed;
  };
  std::vector<Dataset> subsets;
  std::vector<Cell> cells;
  for (std::size_t t = 0; t < ctx.tasks.size(); ++t) {
    const Dataset& full = ctx.tasks[t];
    for (std::size_t size : sizes) {
      subsets.push_back(size == 0 ? full : subsample(full, size, Rng::mix(ctx.subset_seed + t)));
    }
  }
  std::size_t variant = 0;
  for (std::size_t t = 0; t < ctx.tasks.size(); ++t) {
    for (std::size_t zi = 0; zi < sizes.size(); ++zi, ++variant) {
      for (std::uint64_t seed : seeds) {
        for (const MethodSpec& method : methods) {
          cells.push_back({&subsets[variant], ctx.tasks[t].name, &method, seed});
        }
      }
    }
  }

  std::vector<ExperimentRecord> records(cells.size());
  parallel_for(cells.size(), ctx.parallel, [&](std::size_t i) {
    const Cell& c = cells[i];
    records[i] = run_cell(ctx, *c.ds, c.task, *c.method, c.seed, c.ds->train.size(), 0.0);
  });
  sort_records(records);
  return records;
}

CollapseResult collapse_sweep(const HarnessContext& ctx, const std::vector<MethodSpec>& methods,
                              const std::vector<std::uint64_t>& seeds, std::size_t train_size) {
  struct Cell {
    const Dataset* ds;
    std::string task;
    const MethodSpec* method;
    std::uint64_t seed;
  };
  std::vector<Dataset> subsets;
  std::vector<Cell> cells;
  for (std::size_t t = 0; t < ctx.tasks.size(); ++t) {
    const Dataset& full = ctx.tasks[t];
    subsets.push_back(train_size == 0 || train_size >= full.train.size()
                          ? full
                          : subsample(full, train_size, Rng::mix(ctx.subset_seed + t)));
  }
  for (std::size_t t = 0; t < ctx.tasks.size(); ++t) {
    for (std::uint64_t seed : seeds) {
      for (const MethodSpec& method : methods) {
        cells.push_back({&subsets[t], ctx.tasks[t].name, &method, seed});
      }
    }
  }

  CollapseResult result;
  result.records.resize(cells.size());
  result.spectra.resize(cells.size());
  parallel_for(cells.size(), ctx.parallel, [&](std::size_t i) {
    const Cell& c = cells[i];
    TrainConfig cfg = ctx.base_train;
    cfg.regularizer = c.method->reg;
    cfg.seed = c.seed;
    if (!c.method->lambda_grid.empty()) {
      cfg.regularizer.lambda = lambda_select(ctx, *c.ds, *c.method, c.seed);
    }
    const TrainingRun run = finetune(ctx.pretrained, *c.ds, cfg);

    EncoderModel tuned{run.model_config, run.theta_fin};
    const Matrix reps = representations(tuned, c.ds->dev.features, tuned.config.num_layers);

    ExperimentRecord record;
    record.task = c.task;
    record.method = c.method->name;
    record.seed = c.seed;
    record.train_size = c.ds->train.size();
    record.lambda = cfg.regularizer.lambda;
    record.metric_value = run.dev_metric;
    record.failed = run.failed;
    result.records[i] = record;
    result.spectra[i] = gram_spectrum(reps);
  });
  return result;
}

void sort_records(std::vector<ExperimentRecord>& records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task, a.method, a.train_size, a.noise_p, a.lambda, a.seed) <
           std::tie(b.task, b.method, b.train_size, b.noise_p, b.lambda, b.seed);
  });
}

RankReport aggregate(const std::vector<ExperimentRecord>& records, bool filter_failed) {
  RankReport report;
  report.filter_failed = filter_failed;
  if (records.empty()) return report;

  std::set<std::string> method_names;
  for (const auto& r : records) method_names.insert(r.method);

  // Grouping key for one ranking column: (task, size, p).
  using GroupKey = std::tuple<std::string, std::size_t, double>;
  std::map<GroupKey, std::map<std::string, std::vector<const ExperimentRecord*>>> groups;
  std::map<std::string, std::pair<std::size_t, std::size_t>> failure_counts;  // failed, total
  for (const auto& r : records) {
    groups[{r.task, r.train_size, r.noise_p}][r.method].push_back(&r);
    auto& fc = failure_counts[r.method];
    fc.first += r.failed ? 1 : 0;
    fc.second += 1;
  }

  std::map<std::string, double> rank_sums;
  std::map<std::string, double> metric_sums;
  std::map<std::string, std::size_t> metric_counts;
  std::size_t ranked_groups = 0;

  for (const auto& [key, by_method] : groups) {
    std::vector<std::pair<std::string, double>> means;
    for (const auto& name : method_names) {
      auto it = by_method.find(name);
      if (it == by_method.end()) continue;
      double sum = 0.0;
      std::size_t count = 0;
      for (const ExperimentRecord* r : it->second) {
        if (filter_failed && r->failed) continue;
        sum += r->metric_value;
        count += 1;
      }
      if (count == 0) continue;  // all runs filtered: method drops out of this column
      const double mean = sum / static_cast<double>(count);
      means.emplace_back(name, mean);
      metric_sums[name] += mean;
      metric_counts[name] += 1;
    }
    if (means.size() != method_names.size()) continue;  // incomplete column

    // Sort descending; tied means share the average of their positions.
    std::stable_sort(means.begin(), means.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::size_t i = 0;
    while (i < means.size()) {
      std::size_t j = i;
      while (j + 1 < means.size() && means[j + 1].second == means[i].second) ++j;
      const double shared_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t k = i; k <= j; ++k) rank_sums[means[k].first] += shared_rank;
      i = j + 1;
    }
    ranked_groups += 1;
  }

  report.num_groups = ranked_groups;
  for (const auto& name : method_names) {
    RankReport::MethodStats stats;
    stats.method = name;
    stats.mean_metric = metric_counts[name] > 0
                            ? metric_sums[name] / static_cast<double>(metric_counts[name])
                            : 0.0;
    stats.average_rank =
        ranked_groups > 0 ? rank_sums[name] / static_cast<double>(ranked_groups) : 0.0;
    const auto& fc = failure_counts[name];
    stats.filtered_fraction =
        fc.second > 0 ? static_cast<double>(fc.first) / static_cast<double>(fc.second) : 0.0;
    report.methods.push_back(stats);
  }
  return report;
}

std::string records_csv(const std::vector<ExperimentRecord>& records) {
  std::ostringstream out;
  out << "task,method,seed,train_size,noise_p,lambda,metric,failed\n";
  for (const auto& r : records) {
    out << r.task << ',' << r.method << ',' << r.seed << ',' << r.train_size << ','
        << format_double(r.noise_p) << ',' << format_double(r.lambda) << ','
        << format_double(r.metric_value) << ',' << (r.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string rank_report_csv(const RankReport& report) {
  std::ostringstream out;
  out << "method,mean_metric,average_rank,filtered_fraction,filtered\n";
  for (const auto& m : report.methods) {
    out << m.method << ',' << format_double(m.mean_metric) << ','
        << format_double(m.average_rank) << ',' << format_double(m.filtered_fraction) << ','
        << (report.filter_failed ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string rank_report_json(const RankReport& report) {
  nlohmann::json j;
  j["filter_failed"] = report.filter_failed;
  j["num_groups"] = report.num_groups;
  j["methods"] = nlohmann::json::array();
  for (const auto& m : report.methods) {
    j["methods"].push_back({{"method", m.method},
                            {"mean_metric", m.mean_metric},
                            {"average_rank", m.average_rank},
                            {"filtered_fraction", m.filtered_fraction}});
  }
  return j.dump(2);
}

std::string eigenvalue_bars_csv(const CollapseResult& result, std::size_t top_k) {
  std::map<std::string, std::vector<double>> sums;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& method = result.records[i].method;
    const auto& eig = result.spectra[i].eigenvalues;
    auto& acc = sums[method];
    acc.resize(std::max(acc.size(), std::min(top_k, eig.size())), 0.0);
    for (std::size_t k = 0; k < std::min(top_k, eig.size()); ++k) acc[k] += eig[k];
    counts[method] += 1;
  }
  std::ostringstream out;
  out << "method,eigenvalue_index,mean_eigenvalue\n";
  for (const auto& [method, acc] : sums) {
    for (std::size_t k = 0; k < acc.size(); ++k) {
      out << method << ',' << (k + 1) << ','
          << format_double(acc[k] / static_cast<double>(counts[method])) << '\n';
    }
  }
  return out.str();
}

std::string noise_curves_csv(const std::vector<ExperimentRecord>& records) {
  std::map<std::pair<double, std::string>, std::pair<double, std::size_t>> cells;
  for (const auto& r : records) {
    auto& cell = cells[{r.noise_p, r.method}];
    cell.first += r.metric_value;
    cell.second += 1;
  }
  std::ostringstream out;
  out << "noise_p,method,mean_metric\n";
  for (const auto& [key, cell] : cells) {
    out << format_double(key.first) << ',' << key.second << ','
        << format_double(cell.first / static_cast<double>(cell.second)) << '\n';
  }
  return out.str();
}

}  // namespace rcl
