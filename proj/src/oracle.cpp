#include "rcl/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace rcl {

PseudoTask PseudoTask::sample(std::size_t dim, Rng& rng) {
  PseudoTask task;
  task.weight.resize(dim);
  for (double& w : task.weight) w = rng.normal();
  task.bias = rng.normal();
  return task;
}

double PseudoTask::label(const double* rep, std::size_t dim) const {
  double acc = bias;
  for (std::size_t i = 0; i < dim; ++i) acc += weight[i] * rep[i];
  return acc;
}

double ls_residual_loss(const Matrix& b, const std::vector<double>& y) {
  if (b.rows() != y.size()) throw std::invalid_argument("ls_residual_loss: size mismatch");
  const Matrix p = projector(b);
  const std::vector<double> projected = matvec(p, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - projected[i];
    acc += r * r;
  }
  return acc;
}

double closed_form_pseudo_loss(const Matrix& z_pre, const Matrix& z_fin) {
  if (z_pre.rows() != z_fin.rows()) {
    throw std::invalid_argument("closed_form_pseudo_loss: row count mismatch");
  }
  const Matrix p = projector(z_fin);
  return frobenius_sq(p * z_pre - z_pre);
}

McEstimate mc_pseudo_loss(const Matrix& z_pre, const Matrix& z_fin, std::size_t num_samples,
                          std::uint64_t seed) {
  if (num_samples < 100) throw std::invalid_argument("mc_pseudo_loss: need >= 100 samples");
  if (z_pre.rows() != z_fin.rows()) {
    throw std::invalid_argument("mc_pseudo_loss: row count mismatch");
  }
  const std::size_t n = z_pre.rows();
  const std::size_t d = z_pre.cols();
  Rng rng(seed);

  // Inner minimization per draw is ls_residual_loss(z_fin, Z_pre u); the
  // projector does not depend on u, so it is hoisted out of the loop.
  const Matrix p = projector(z_fin);

  std::vector<double> u(d), labels(n), projected;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < num_samples; ++s) {
    for (double& v : u) v = rng.normal();
    labels = matvec(z_pre, u);
    projected = matvec(p, labels);
    double val = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = labels[j] - projected[j];
      val += r * r;
    }
    sum += val;
    sum_sq += val * val;
  }

  McEstimate out;
  const double mean = sum / static_cast<double>(num_samples);
  out.estimate = mean;
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(num_samples) - mean * mean);
  out.standard_error = std::sqrt(var / static_cast<double>(num_samples));
  return out;
}

LinearMapLoss min_linear_map_loss(const Matrix& z_pre, const Matrix& z_fin) {
  if (z_pre.rows() != z_fin.rows()) {
    throw std::invalid_argument("min_linear_map_loss: row count mismatch");
  }
  LinearMapLoss out;
  // W^T = (Z_fin^T Z_fin)^+ Z_fin^T Z_pre, solved columnwise via the
  // pseudo-inverse; pinv(Z_fin) is exactly (Z_fin^T Z_fin)^+ Z_fin^T.
  const Matrix wt = pinv(z_fin) * z_pre;
  out.w = wt.transpose();

  const Matrix reconstructed = z_fin * wt;  // row j = (W z_fin_j)^T
  out.value = frobenius_sq(reconstructed - z_pre);
  return out;
}

Matrix with_bias_column(const Matrix& m) {
  Matrix out(m.rows(), m.cols() + 1);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy(m.row(r), m.row(r) + m.cols(), out.row(r));
    out(r, m.cols()) = 1.0;
  }
  return out;
}

EquivalenceReport verify_theorem_1(const EncoderModel& encoder_pre,
                                   const EncoderModel& encoder_fin, const Matrix& inputs,
                                   std::size_t num_tasks, std::uint64_t seed) {
  if (num_tasks < 1) throw std::invalid_argument("verify_theorem_1: need >= 1 task");
  const std::size_t layer_pre = encoder_pre.config.num_layers;
  const std::size_t layer_fin = encoder_fin.config.num_layers;
  const Matrix z_pre = representations(encoder_pre, inputs, layer_pre);
  const Matrix z_fin = representations(encoder_fin, inputs, layer_fin);
  const std::size_t n = inputs.rows();
  const std::size_t d = z_pre.cols();

  // Bias-augmented design: tasks carry an N(0,1) bias, so u = (w, b) is
  // standard normal in d+1 dims over [Z_pre | 1], and the per-task head
  // (v, c) acts on [Z_fin | 1].
  const Matrix z_pre_aug = with_bias_column(z_pre);
  const Matrix z_fin_aug = with_bias_column(z_fin);

  EquivalenceReport report;
  report.seed = seed;
  report.num_samples = num_tasks;
  report.closed_form_value = closed_form_pseudo_loss(z_pre_aug, z_fin_aug);
  report.min_w_value = min_linear_map_loss(z_pre_aug, z_fin_aug).value;

  const Matrix p = projector(z_fin_aug);
  Rng rng(seed);
  std::vector<double> labels(n), projected;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    const PseudoTask task = PseudoTask::sample(d, rng);
    for (std::size_t j = 0; j < n; ++j) labels[j] = task.label(z_pre.row(j), d);
    projected = matvec(p, labels);
    double val = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = labels[j] - projected[j];
      val += r * r;
    }
    sum += val;
    sum_sq += val * val;
  }
  report.mc_sum = sum;
  report.mc_estimate = sum / static_cast<double>(num_tasks);
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(num_tasks) -
                        report.mc_estimate * report.mc_estimate);
  report.mc_standard_error = std::sqrt(var / static_cast<double>(num_tasks));
  return report;
}

std::string EquivalenceReport::to_json() const {
  nlohmann::json j{{"closed_form_value", closed_form_value},
                   {"mc_estimate", mc_estimate},
                   {"mc_standard_error", mc_standard_error},
                   {"mc_sum", mc_sum},
                   {"min_w_value", min_w_value},
                   {"num_samples", num_samples},
                   {"seed", seed}};
  return j.dump(2);
}

}  // namespace rcl
