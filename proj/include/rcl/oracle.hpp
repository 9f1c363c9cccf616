#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcl/data.hpp"
#include "rcl/matrix.hpp"
#include "rcl/net.hpp"
#include "rcl/rng.hpp"

namespace rcl {

// One random regression task on frozen representations: labels are
// x -> w^T z_pre(x) + b with w, b standard normal.
struct PseudoTask {
  std::vector<double> weight;
  double bias = 0.0;

  static PseudoTask sample(std::size_t dim, Rng& rng);
  double label(const double* rep, std::size_t dim) const;
};

struct EquivalenceReport {
  double closed_form_value = 0.0;  // per-task closed form
  double mc_estimate = 0.0;        // per-task empirical mean
  double mc_standard_error = 0.0;
  double mc_sum = 0.0;             // raw sum over tasks
  double min_w_value = 0.0;
  std::size_t num_samples = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

// min_v sum_j (y_j - v^T b_j)^2 = ||y - B (B^T B)^+ B^T y||^2.
double ls_residual_loss(const Matrix& b, const std::vector<double>& y);

// ||(Z_fin (Z_fin^T Z_fin)^+ Z_fin^T - I) Z_pre||_F^2: the off-projection of
// Z_pre onto col(Z_fin).
double closed_form_pseudo_loss(const Matrix& z_pre, const Matrix& z_fin);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

// Monte-Carlo estimate of E_{u~N(0,I_d)}[min_v sum_j (u^T z_pre_j - v^T z_fin_j)^2].
McEstimate mc_pseudo_loss(const Matrix& z_pre, const Matrix& z_fin, std::size_t num_samples,
                          std::uint64_t seed);

struct LinearMapLoss {
  double value = 0.0;
  Matrix w;  // minimizing map, z_pre ~ W z_fin
};

// min_W sum_j ||z_pre_j - W z_fin_j||^2 with W^T = (Z_fin^T Z_fin)^+ Z_fin^T Z_pre.
LinearMapLoss min_linear_map_loss(const Matrix& z_pre, const Matrix& z_fin);

// Samples T pseudo tasks on the frozen encoder, fits a per-task optimal
// linear head (with bias) on the fine-tuned representations, and compares the
// total auxiliary loss against T x the bias-augmented closed form.
EquivalenceReport verify_theorem_1(const EncoderModel& encoder_pre, const EncoderModel& encoder_fin,
                                   const Matrix& inputs, std::size_t num_tasks,
                                   std::uint64_t seed);

// Appends a constant-1 column (bias feature).
Matrix with_bias_column(const Matrix& m);

}  // namespace rcl
