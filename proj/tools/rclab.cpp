// rclab: experiment driver for representation-consistency fine-tuning studies.
//
// Subcommands:
//   run <config.json>   execute the experiment described by the config
//   metrics <csv>       spectrum diversity metrics for an embeddings matrix
//
// All experiment parameters live in the JSON config; flags cover only paths,
// seed overrides, parallelism and verbosity.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rcl/collapse.hpp"
#include "rcl/config.hpp"
#include "rcl/format.hpp"
#include "rcl/data.hpp"
#include "rcl/harness.hpp"
#include "rcl/matrix.hpp"
#include "rcl/oracle.hpp"
#include "rcl/parallel.hpp"
#include "rcl/rng.hpp"
#include "rcl/train.hpp"

namespace fs = std::filesystem;

namespace {

struct CliOptions {
  std::string config_path;
  std::string output_dir;
  std::vector<std::uint64_t> seeds;
  std::size_t parallel = 1;
  bool verbose = false;
};

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// Timestamps are confined to this sidecar so every other artifact is
// byte-identical across reruns.
void append_log(const fs::path& dir, const std::string& message) {
  fs::create_directories(dir);
  std::ofstream log(dir / "run.log", std::ios::app);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
  log << stamp << " " << message << "\n";
}

fs::path resolve_output_dir(const rcl::RunConfig& cfg, const CliOptions& opts) {
  if (!opts.output_dir.empty()) return opts.output_dir;
  if (!cfg.experiment.output_dir.empty()) return cfg.experiment.output_dir;
  if (const char* env = std::getenv("RCL_OUTPUT_DIR")) return env;
  return "out";
}

std::vector<rcl::Dataset> build_tasks(const rcl::RunConfig& cfg) {
  if (cfg.dataset.csv_path) {
    rcl::Dataset ds = rcl::load_csv(*cfg.dataset.csv_path);
    // A flat CSV has no dev/heldout annotation: carve 1/6 + 1/6 off the end.
    const std::size_t n = ds.train.size();
    if (n < 12) throw std::runtime_error("csv dataset too small to split");
    const std::size_t dev_n = n / 6, held_n = n / 6;
    const std::size_t train_n = n - dev_n - held_n;
    rcl::Dataset out;
    out.name = fs::path(*cfg.dataset.csv_path).stem().string();
    out.num_classes = ds.num_classes;
    auto carve = [&](rcl::Split& split, std::size_t begin, std::size_t count) {
      split.features = rcl::Matrix(count, ds.train.features.cols());
      split.labels.resize(count);
      for (std::size_t j = 0; j < count; ++j) {
        std::copy(ds.train.features.row(begin + j),
                  ds.train.features.row(begin + j) + ds.train.features.cols(),
                  split.features.row(j));
        split.labels[j] = ds.train.labels[begin + j];
      }
    };
    carve(out.train, 0, train_n);
    carve(out.dev, train_n, dev_n);
    carve(out.heldout, train_n + dev_n, held_n);
    out.validate();
    return {out};
  }
  rcl::TeacherTaskConfig gen = cfg.dataset.generator.value_or(rcl::TeacherTaskConfig{});
  gen.input_dim = cfg.model.input_dim;
  gen.num_classes = static_cast<int>(cfg.model.num_classes);
  return rcl::gen_teacher_tasks(gen, cfg.dataset.num_tasks);
}

rcl::EncoderModel run_pretrain(const rcl::RunConfig& cfg, const std::vector<rcl::Dataset>& tasks,
                               bool verbose) {
  rcl::PretrainConfig pre_cfg;
  pre_cfg.encoder = cfg.model;
  pre_cfg.epochs = cfg.pretrain.epochs;
  pre_cfg.batch_size = cfg.pretrain.batch_size;
  pre_cfg.learning_rate = cfg.pretrain.learning_rate;

  std::vector<rcl::Dataset> pretrain_tasks;
  for (std::size_t idx : cfg.experiment.pretrain_tasks) {
    if (idx >= tasks.size()) throw std::runtime_error("pretrain task index out of range");
    pretrain_tasks.push_back(tasks[idx]);
  }
  if (verbose) {
    std::cerr << "pretraining on " << pretrain_tasks.size() << " teacher tasks, "
              << pre_cfg.epochs << " epochs\n";
  }
  return rcl::pretrain(pre_cfg, pretrain_tasks);
}

std::vector<rcl::MethodSpec> methods_from_config(const rcl::RunConfig& cfg) {
  if (!cfg.regularizers.empty()) return cfg.regularizers;
  return {rcl::MethodSpec::preset("std++"), rcl::MethodSpec::preset("capcort_i"),
          rcl::MethodSpec::preset("capcort_mlp")};
}

void write_reports(const fs::path& out_dir, const std::vector<rcl::ExperimentRecord>& records) {
  write_file(out_dir / "records.csv", rcl::records_csv(records));
  std::string ranks = rcl::rank_report_csv(rcl::aggregate(records, true));
  const std::string unfiltered = rcl::rank_report_csv(rcl::aggregate(records, false));
  // Append the unfiltered variant without repeating the header.
  ranks += unfiltered.substr(unfiltered.find('\n') + 1);
  write_file(out_dir / "ranks.csv", ranks);
}

void write_run_jsons(const fs::path& out_dir, const std::string& experiment,
                     const std::vector<rcl::ExperimentRecord>& records,
                     const std::vector<std::string>& run_jsons) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const fs::path path = out_dir / experiment / r.task / r.method /
                          ("seed" + std::to_string(r.seed) + ".json");
    write_file(path, run_jsons[i]);
  }
}

int cmd_train(const rcl::RunConfig& cfg, const rcl::HarnessContext& ctx, const fs::path& out_dir,
              bool verbose) {
  const auto methods = methods_from_config(cfg);
  const rcl::Dataset& full = ctx.tasks[0];
  const rcl::Dataset ds =
      cfg.experiment.train_size == 0 || cfg.experiment.train_size >= full.train.size()
          ? full
          : rcl::subsample(full, cfg.experiment.train_size, rcl::Rng::mix(ctx.subset_seed));

  struct Cell {
    const rcl::MethodSpec* method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& method : methods) {
    for (std::uint64_t seed : cfg.experiment.seeds) cells.push_back({&method, seed});
  }

  std::vector<rcl::ExperimentRecord> records(cells.size());
  std::vector<std::string> run_jsons(cells.size());
  rcl::parallel_for(cells.size(), ctx.parallel, [&](std::size_t i) {
    rcl::TrainConfig tc = ctx.base_train;
    tc.regularizer = cells[i].method->reg;
    tc.seed = cells[i].seed;
    if (!cells[i].method->lambda_grid.empty()) {
      tc.regularizer.lambda = rcl::lambda_select(ctx, ds, *cells[i].method, cells[i].seed);
    }
    const rcl::TrainingRun run = rcl::finetune(ctx.pretrained, ds, tc);
    rcl::ExperimentRecord rec;
    rec.task = full.name;
    rec.method = cells[i].method->name;
    rec.seed = cells[i].seed;
    rec.train_size = ds.train.size();
    rec.lambda = tc.regularizer.lambda;
    rec.metric_value = run.dev_metric;
    rec.failed = run.failed;
    records[i] = rec;
    run_jsons[i] = run.to_json();
  });

  write_run_jsons(out_dir, "train", records, run_jsons);
  rcl::sort_records(records);
  write_reports(out_dir, records);

  const rcl::RankReport report = rcl::aggregate(records, true);
  std::cout << "train: " << records.size() << " runs on task " << full.name << " ("
            << ds.train.size() << " train points)\n";
  for (const auto& m : report.methods) {
    std::cout << "  " << m.method << ": mean " << rcl::format_double(m.mean_metric) << ", rank "
              << rcl::format_double(m.average_rank) << ", filtered " << m.filtered_fraction << "\n";
  }
  if (verbose) std::cout << "outputs in " << out_dir << "\n";
  return 0;
}

int cmd_probe(const rcl::RunConfig& cfg, const rcl::HarnessContext& ctx,
              const std::vector<rcl::Dataset>& tasks, const fs::path& out_dir) {
  const auto methods = methods_from_config(cfg);
  if (cfg.experiment.probe_task >= tasks.size()) {
    throw std::runtime_error("probe task index out of range");
  }
  const rcl::Dataset& task_b = tasks[cfg.experiment.probe_task];
  const rcl::Dataset& full = ctx.tasks[0];
  const rcl::Dataset ds =
      cfg.experiment.train_size == 0 || cfg.experiment.train_size >= full.train.size()
          ? full
          : rcl::subsample(full, cfg.experiment.train_size, rcl::Rng::mix(ctx.subset_seed));

  struct Cell {
    const rcl::MethodSpec* method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& method : methods) {
    for (std::uint64_t seed : cfg.experiment.seeds) cells.push_back({&method, seed});
  }

  std::vector<rcl::ExperimentRecord> records(cells.size());
  std::vector<std::string> run_jsons(cells.size());
  rcl::parallel_for(cells.size(), ctx.parallel, [&](std::size_t i) {
    rcl::TrainConfig tc = ctx.base_train;
    tc.regularizer = cells[i].method->reg;
    tc.seed = cells[i].seed;
    if (!cells[i].method->lambda_grid.empty()) {
      tc.regularizer.lambda = rcl::lambda_select(ctx, ds, *cells[i].method, cells[i].seed);
    }
    const rcl::TrainingRun run = rcl::finetune(ctx.pretrained, ds, tc);
    const rcl::EncoderModel tuned{run.model_config, run.theta_fin};
    const rcl::ProbeResult probe_result = rcl::probe(
        tuned, task_b, cfg.experiment.probe_epochs, cells[i].seed, ctx.base_train.metric);

    rcl::ExperimentRecord rec;
    rec.task = full.name + "->" + task_b.name;
    rec.method = cells[i].method->name;
    rec.seed = cells[i].seed;
    rec.train_size = ds.train.size();
    rec.lambda = tc.regularizer.lambda;
    rec.metric_value = probe_result.dev_metric;
    rec.failed = run.failed;
    records[i] = rec;
    nlohmann::json j{{"finetune_dev_metric", run.dev_metric},
                     {"probe_train_metric", probe_result.train_metric},
                     {"probe_dev_metric", probe_result.dev_metric},
                     {"lambda", tc.regularizer.lambda}};
    run_jsons[i] = j.dump(2);
  });

  write_run_jsons(out_dir, "probe", records, run_jsons);
  rcl::sort_records(records);
  write_reports(out_dir, records);

  const rcl::RankReport report = rcl::aggregate(records, false);
  std::cout << "probe: fine-tuned on " << full.name << ", probed on " << task_b.name << "\n";
  for (const auto& m : report.methods) {
    std::cout << "  " << m.method << ": mean probe metric " << rcl::format_double(m.mean_metric)
              << "\n";
  }
  return 0;
}

int cmd_sweep(const rcl::RunConfig& cfg, const rcl::HarnessContext& ctx_in,
              const fs::path& out_dir, bool noise) {
  const auto methods = methods_from_config(cfg);
  std::vector<rcl::ExperimentRecord> records;
  if (noise) {
    // The noise protocol optionally runs on a fixed few-sample subset.
    rcl::HarnessContext ctx = ctx_in;
    if (cfg.experiment.train_size > 0 &&
        cfg.experiment.train_size < ctx.tasks[0].train.size()) {
      ctx.tasks[0] = rcl::subsample(ctx.tasks[0], cfg.experiment.train_size,
                                    rcl::Rng::mix(ctx.subset_seed));
    }
    records = rcl::noise_sweep(ctx, methods, cfg.experiment.noise_grid, cfg.experiment.seeds);
    write_file(out_dir / "plotdata" / "noise_curves.csv", rcl::noise_curves_csv(records));
  } else {
    records = rcl::size_sweep(ctx_in, methods, cfg.experiment.sizes, cfg.experiment.seeds);
  }
  write_reports(out_dir, records);

  const rcl::RankReport filtered = rcl::aggregate(records, true);
  std::cout << (noise ? "noise-sweep" : "size-sweep") << ": " << records.size() << " records, "
            << filtered.num_groups << " ranked groups\n";
  for (const auto& m : filtered.methods) {
    std::cout << "  " << m.method << ": mean " << rcl::format_double(m.mean_metric) << ", rank "
              << rcl::format_double(m.average_rank) << ", filtered " << m.filtered_fraction << "\n";
  }
  return 0;
}

int cmd_collapse(const rcl::RunConfig& cfg, const rcl::HarnessContext& ctx,
                 const fs::path& out_dir) {
  const auto methods = methods_from_config(cfg);
  const rcl::CollapseResult result =
      rcl::collapse_sweep(ctx, methods, cfg.experiment.seeds, cfg.experiment.train_size);

  std::ostringstream spectra_csv;
  spectra_csv << rcl::SpectrumReport::csv_header(ctx.pretrained.config.hidden_dim) << "\n";
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    spectra_csv << result.spectra[i].csv_row(r.method, r.task, r.seed) << "\n";
    write_file(out_dir / "collapse" / r.task / r.method /
                   ("seed" + std::to_string(r.seed) + ".json"),
               result.spectra[i].to_json());
  }
  write_file(out_dir / "spectra.csv", spectra_csv.str());
  write_file(out_dir / "plotdata" / "eigenvalue_bars.csv",
             rcl::eigenvalue_bars_csv(result, 20));

  std::vector<rcl::ExperimentRecord> records = result.records;
  rcl::sort_records(records);
  write_reports(out_dir, records);

  // Per-method GM-5 means (the collapse headline statistic).
  std::map<std::string, std::pair<double, std::size_t>> gm5;
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    auto& cell = gm5[result.records[i].method];
    cell.first += rcl::gm_k(result.spectra[i],
                            std::min<std::size_t>(5, result.spectra[i].eigenvalues.size()));
    cell.second += 1;
  }
  std::cout << "collapse: " << result.records.size() << " spectra\n";
  for (const auto& [method, cell] : gm5) {
    std::cout << "  " << method << ": mean GM-5 "
              << rcl::format_double(cell.first / static_cast<double>(cell.second)) << "\n";
  }
  return 0;
}

int cmd_verify_theory(const rcl::RunConfig& cfg, const fs::path& out_dir) {
  using rcl::Matrix;
  bool all_pass = true;
  std::ostringstream table;
  auto row = [&](const std::string& name, bool pass, const std::string& detail) {
    all_pass = all_pass && pass;
    table << (pass ? "PASS" : "FAIL") << "  " << name << "  " << detail << "\n";
  };

  rcl::Rng root(cfg.model.seed + 7);
  auto random_matrix = [&](std::size_t rows, std::size_t cols, rcl::Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  };

  {  // Equivalence of the min-over-linear-maps route and the projector route.
    rcl::Rng rng = root.fork(1);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const std::size_t n = 8 + rng.uniform_index(25);
      const std::size_t d = 2 + rng.uniform_index(7);
      const Matrix z_pre = random_matrix(n, d, rng);
      const Matrix z_fin = random_matrix(n, d, rng);
      const double closed = rcl::closed_form_pseudo_loss(z_pre, z_fin);
      const double direct = rcl::min_linear_map_loss(z_pre, z_fin).value;
      worst = std::max(worst, std::abs(closed - direct) / (1.0 + closed));
    }
    row("linear-map equivalence (50 instances)", worst <= 1e-8,
        "max rel diff " + rcl::format_double(worst));
  }

  {  // Monte-Carlo Gaussian reduction.
    rcl::Rng rng = root.fork(2);
    bool pass = true;
    double worst_sigma = 0.0;
    for (int i = 0; i < 10; ++i) {
      const std::size_t n = 10 + rng.uniform_index(12);
      const std::size_t d = 3 + rng.uniform_index(4);
      const Matrix z_pre = random_matrix(n, d, rng);
      const Matrix z_fin = random_matrix(n, d, rng);
      const double closed = rcl::closed_form_pseudo_loss(z_pre, z_fin);
      const auto mc =
          rcl::mc_pseudo_loss(z_pre, z_fin, cfg.experiment.mc_samples, rng.next_u64());
      const double sigmas = std::abs(mc.estimate - closed) / mc.standard_error;
      worst_sigma = std::max(worst_sigma, sigmas);
      pass = pass && sigmas <= 3.0;
    }
    row("gaussian reduction (10 instances, " + std::to_string(cfg.experiment.mc_samples) +
            " samples)",
        pass, "worst deviation " + rcl::format_double(worst_sigma) + " sigma");
  }

  {  // Least-squares residual vs an explicit descent minimization.
    rcl::Rng rng = root.fork(3);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const std::size_t n = 8 + rng.uniform_index(9);
      const std::size_t d = 2 + rng.uniform_index(4);
      const Matrix b = random_matrix(n, d, rng);
      std::vector<double> y(n);
      for (double& v : y) v = rng.normal();
      const double closed = rcl::ls_residual_loss(b, y);

      std::vector<double> v(d, 0.0);
      const double lr = 0.05;
      for (int it = 0; it < 10000; ++it) {
        std::vector<double> g(d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          double pred = 0.0;
          for (std::size_t k = 0; k < d; ++k) pred += v[k] * b(j, k);
          const double r = pred - y[j];
          for (std::size_t k = 0; k < d; ++k) g[k] += 2.0 * r * b(j, k) / static_cast<double>(n);
        }
        for (std::size_t k = 0; k < d; ++k) v[k] -= lr * g[k];
      }
      double descent = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double pred = 0.0;
        for (std::size_t k = 0; k < d; ++k) pred += v[k] * b(j, k);
        descent += (y[j] - pred) * (y[j] - pred);
      }
      worst = std::max(worst, std::abs(descent - closed) / std::max(1e-300, std::abs(closed)));
    }
    row("least-squares residual vs descent (20 instances)", worst <= 1e-6,
        "max rel diff " + rcl::format_double(worst));
  }

  {  // End-to-end pseudo multi-task reduction on small random encoders.
    rcl::Rng rng = root.fork(4);
    rcl::EncoderConfig ec;
    ec.input_dim = 6;
    ec.hidden_dim = 5;
    ec.num_layers = 2;
    ec.num_classes = 2;
    ec.seed = rng.next_u64();
    const rcl::EncoderModel pre = rcl::init(ec);
    ec.seed = rng.next_u64();
    const rcl::EncoderModel fin = rcl::init(ec);
    const Matrix inputs = random_matrix(24, ec.input_dim, rng);
    const auto report =
        rcl::verify_theorem_1(pre, fin, inputs, cfg.experiment.theory_tasks, rng.next_u64());
    const double sigmas = report.mc_standard_error > 0.0
                              ? std::abs(report.mc_estimate - report.closed_form_value) /
                                    report.mc_standard_error
                              : 0.0;
    row("pseudo multi-task reduction (T=" + std::to_string(cfg.experiment.theory_tasks) + ")",
        sigmas <= 3.0, "deviation " + rcl::format_double(sigmas) + " sigma");
    write_file(out_dir / "theory" / "theorem1.json", report.to_json());
  }

  {  // E||Mu||^2 against the squared Frobenius norm.
    rcl::Rng rng = root.fork(5);
    const Matrix m = random_matrix(6, 6, rng);
    const double frob = rcl::frobenius_sq(m);
    double sum = 0.0, sum_sq = 0.0;
    const std::size_t trials = 100000;
    std::vector<double> u(6);
    for (std::size_t t = 0; t < trials; ++t) {
      for (double& x : u) x = rng.normal();
      const auto mu = rcl::matvec(m, u);
      double norm = 0.0;
      for (double x : mu) norm += x * x;
      sum += norm;
      sum_sq += norm * norm;
    }
    const double mean = sum / trials;
    const double se = std::sqrt(std::max(0.0, sum_sq / trials - mean * mean) / trials);
    const double sigmas = std::abs(mean - frob) / se;
    row("gaussian expectation lemma (1e5 draws)", sigmas <= 3.0,
        "deviation " + rcl::format_double(sigmas) + " sigma");
  }

  std::cout << table.str();
  std::cout << (all_pass ? "all theory checks passed" : "THEORY CHECK FAILURE") << "\n";
  write_file(out_dir / "theory" / "summary.txt", table.str());
  return all_pass ? 0 : 1;
}

int cmd_run(const CliOptions& opts) {
  rcl::RunConfig cfg = rcl::RunConfig::load(opts.config_path);
  if (!opts.seeds.empty()) cfg.experiment.seeds = opts.seeds;
  const fs::path out_dir = resolve_output_dir(cfg, opts);
  append_log(out_dir, "run " + cfg.experiment.kind + " from " + opts.config_path);

  if (cfg.experiment.kind == "verify-theory") {
    return cmd_verify_theory(cfg, out_dir);
  }

  const std::vector<rcl::Dataset> tasks = build_tasks(cfg);
  rcl::HarnessContext ctx;
  ctx.pretrained = run_pretrain(cfg, tasks, opts.verbose);
  ctx.tasks = {tasks[0]};
  ctx.base_train = cfg.train;
  ctx.parallel = opts.parallel;

  if (cfg.experiment.kind == "train") return cmd_train(cfg, ctx, out_dir, opts.verbose);
  if (cfg.experiment.kind == "probe") return cmd_probe(cfg, ctx, tasks, out_dir);
  if (cfg.experiment.kind == "noise-sweep") return cmd_sweep(cfg, ctx, out_dir, true);
  if (cfg.experiment.kind == "size-sweep") return cmd_sweep(cfg, ctx, out_dir, false);
  if (cfg.experiment.kind == "collapse") return cmd_collapse(cfg, ctx, out_dir);
  throw std::runtime_error("unhandled experiment kind " + cfg.experiment.kind);
}

// N x d numeric CSV (optional header row is skipped).
rcl::Matrix read_embeddings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> values;
  std::size_t cols = 0, rows = 0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw std::runtime_error("non-numeric cell in " + path);
    }
    first = false;
    if (cols == 0) cols = row.size();
    if (row.size() != cols) throw std::runtime_error("ragged row in " + path);
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("no data rows in " + path);
  return rcl::Matrix(rows, cols, std::move(values));
}

int cmd_metrics(const std::string& path, std::vector<std::size_t> ks) {
  const rcl::Matrix z = read_embeddings_csv(path);
  const rcl::SpectrumReport report = rcl::gram_spectrum(z);
  if (ks.empty()) ks = {5, 10, 20};

  std::cout << "samples " << report.num_samples << ", dim " << report.dim << "\n";
  std::cout << "eigenvalues:";
  for (std::size_t i = 0; i < std::min<std::size_t>(report.dim, 32); ++i) {
    std::cout << ' ' << rcl::format_double(report.eigenvalues[i]);
  }
  std::cout << "\n";
  for (std::size_t k : ks) {
    const std::size_t kk = std::min<std::size_t>(k, report.dim);
    std::cout << "GM-" << k << " " << rcl::format_double(rcl::gm_k(report, kk)) << "  HM-" << k << " "
              << rcl::format_double(rcl::hm_k(report, kk)) << "  mass-" << k << " "
              << rcl::format_double(rcl::normalized_mass_k(report, kk)) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"representation-consistency fine-tuning laboratory"};
  app.require_subcommand(1);

  CliOptions opts;
  auto* run = app.add_subcommand("run", "execute the experiment described by a JSON config");
  run->add_option("config", opts.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--output", opts.output_dir, "output directory (overrides config)");
  run->add_option("--seeds", opts.seeds, "seed override list");
  run->add_option("--parallel", opts.parallel, "max concurrent cells")->default_val(1);
  run->add_flag("-v,--verbose", opts.verbose, "chatty progress output");

  std::string metrics_path;
  std::vector<std::size_t> metrics_ks;
  auto* metrics = app.add_subcommand("metrics", "spectrum metrics for an embeddings CSV");
  metrics->add_option("csv", metrics_path, "N x d numeric CSV")
      ->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("--k", metrics_ks, "top-k list (default 5 10 20)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(opts);
    if (metrics->parsed()) return cmd_metrics(metrics_path, metrics_ks);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
