#include <doctest.h>

#include <cmath>
#include <vector>

#include "rcl/matrix.hpp"
#include "rcl/net.hpp"
#include "rcl/oracle.hpp"
#include "rcl/rng.hpp"

using rcl::Matrix;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, rcl::Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Plain gradient-descent minimizer of sum_j (y_j - v^T b_j)^2.
double descent_min_loss(const Matrix& b, const std::vector<double>& y, int steps) {
  const std::size_t n = b.rows();
  const std::size_t d = b.cols();
  std::vector<double> v(d, 0.0);
  const double lr = 0.02;
  for (int it = 0; it < steps; ++it) {
    std::vector<double> g(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double pred = 0.0;
      for (std::size_t k = 0; k < d; ++k) pred += v[k] * b(j, k);
      const double r = pred - y[j];
      for (std::size_t k = 0; k < d; ++k) g[k] += 2.0 * r * b(j, k) / static_cast<double>(n);
    }
    for (std::size_t k = 0; k < d; ++k) v[k] -= lr * g[k];
  }
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double pred = 0.0;
    for (std::size_t k = 0; k < d; ++k) pred += v[k] * b(j, k);
    loss += (y[j] - pred) * (y[j] - pred);
  }
  return loss;
}

}  // namespace

TEST_CASE("ls_residual_loss trivial geometry") {
  // y in the column space: zero residual.
  const Matrix b(3, 2, {1, 0, 0, 1, 0, 0});
  const std::vector<double> in_span = {2.0, -3.0, 0.0};
  CHECK(rcl::ls_residual_loss(b, in_span) == doctest::Approx(0.0));

  // Orthogonal residual.
  const Matrix col(2, 1, {1, 0});
  CHECK(rcl::ls_residual_loss(col, {0.0, 1.0}) == doctest::Approx(1.0));

  CHECK_THROWS(rcl::ls_residual_loss(col, {1.0, 2.0, 3.0}));
}

TEST_CASE("ls_residual_loss matches a 1e4-step descent oracle") {
  rcl::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 8 + rng.uniform_index(9);
    const std::size_t d = 2 + rng.uniform_index(4);
    const Matrix b = random_matrix(n, d, rng);
    std::vector<double> y(n);
    for (double& v : y) v = rng.normal();
    const double closed = rcl::ls_residual_loss(b, y);
    const double descent = descent_min_loss(b, y, 10000);
    CHECK(std::abs(closed - descent) <= 1e-6 * std::max(1.0, std::abs(closed)));
  }
}

TEST_CASE("closed_form_pseudo_loss trivial cases") {
  rcl::Rng rng(5);
  const Matrix z = random_matrix(8, 3, rng);
  CHECK(rcl::closed_form_pseudo_loss(z, z) == doctest::Approx(0.0));

  const Matrix zero(8, 3);
  CHECK(rcl::closed_form_pseudo_loss(z, zero) ==
        doctest::Approx(rcl::frobenius_sq(z)).epsilon(1e-12));

  // Z_pre = I_2, Z_fin rows (1,0),(0,0): only the first coordinate is
  // reconstructable, so exactly one unit of mass is lost.
  const Matrix z_pre = Matrix::identity(2);
  const Matrix z_fin(2, 2, {1, 0, 0, 0});
  CHECK(rcl::closed_form_pseudo_loss(z_pre, z_fin) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mc_pseudo_loss converges to the closed form") {
  rcl::Rng rng(7);
  const Matrix z_pre = random_matrix(12, 4, rng);
  const Matrix z_fin = random_matrix(12, 4, rng);
  const double closed = rcl::closed_form_pseudo_loss(z_pre, z_fin);

  const auto mc = rcl::mc_pseudo_loss(z_pre, z_fin, 200000, 99);
  CHECK(std::abs(mc.estimate - closed) <= 3.0 * mc.standard_error);
  CHECK(mc.standard_error < 0.01 * closed * 3.0);  // sanity on scale

  // Spanned case: exact zero with zero variance.
  const auto spanned = rcl::mc_pseudo_loss(z_fin, z_fin, 200, 1);
  CHECK(spanned.estimate <= 1e-18);
  CHECK(spanned.standard_error <= 1e-18);

  CHECK_THROWS(rcl::mc_pseudo_loss(z_pre, z_fin, 50, 1));
}

TEST_CASE("mc_pseudo_loss standard error halves when samples quadruple") {
  rcl::Rng rng(11);
  const Matrix z_pre = random_matrix(10, 3, rng);
  const Matrix z_fin = random_matrix(10, 3, rng);
  const auto small = rcl::mc_pseudo_loss(z_pre, z_fin, 20000, 5);
  const auto big = rcl::mc_pseudo_loss(z_pre, z_fin, 80000, 6);
  const double ratio = small.standard_error / big.standard_error;
  CHECK(ratio >= 2.0 * 0.8);
  CHECK(ratio <= 2.0 * 1.2);
}

TEST_CASE("min_linear_map_loss trivial cases") {
  rcl::Rng rng(13);
  const Matrix z = random_matrix(10, 4, rng);
  const auto same = rcl::min_linear_map_loss(z, z);
  CHECK(same.value == doctest::Approx(0.0));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(same.w(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));
    }
  }

  // Invertible square Z_fin reconstructs anything exactly.
  const Matrix z_fin = random_matrix(4, 4, rng);
  const Matrix z_pre = random_matrix(4, 4, rng);
  CHECK(rcl::min_linear_map_loss(z_pre, z_fin).value <= 1e-16);
}

TEST_CASE("min_linear_map_loss equals closed_form_pseudo_loss (Theorem A.2)") {
  rcl::Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 8 + rng.uniform_index(25);
    const std::size_t d = 2 + rng.uniform_index(7);
    const Matrix z_pre = random_matrix(n, d, rng);
    Matrix z_fin = random_matrix(n, d, rng);
    if (trial % 5 == 0 && d >= 2) {
      // Rank-deficient fine-tuned representations.
      for (std::size_t r = 0; r < n; ++r) z_fin(r, d - 1) = z_fin(r, 0);
    }
    const double closed = rcl::closed_form_pseudo_loss(z_pre, z_fin);
    const double direct = rcl::min_linear_map_loss(z_pre, z_fin).value;
    CHECK(std::abs(closed - direct) <= 1e-8 * (1.0 + closed));
  }
}

TEST_CASE("gaussian expectation lemma: E||Mu||^2 = ||M||_F^2") {
  rcl::Rng rng(19);
  const Matrix m = random_matrix(5, 5, rng);
  const double frob = rcl::frobenius_sq(m);

  double sum = 0.0, sum_sq = 0.0;
  const std::size_t trials = 100000;
  std::vector<double> u(5);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& x : u) x = rng.normal();
    double norm = 0.0;
    for (double x : rcl::matvec(m, u)) norm += x * x;
    sum += norm;
    sum_sq += norm * norm;
  }
  const double mean = sum / trials;
  const double se = std::sqrt(std::max(0.0, sum_sq / trials - mean * mean) / trials);
  CHECK(std::abs(mean - frob) <= 3.0 * se);
}

TEST_CASE("bias augmentation never increases the pseudo loss") {
  rcl::Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix z_pre = random_matrix(12, 4, rng);
    const Matrix z_fin = random_matrix(12, 4, rng);
    const double plain = rcl::closed_form_pseudo_loss(z_pre, z_fin);
    const double augmented = rcl::closed_form_pseudo_loss(z_pre, rcl::with_bias_column(z_fin));
    CHECK(augmented <= plain + 1e-9);
  }
}

TEST_CASE("pseudo task sampling is reproducible") {
  rcl::Rng a(3), b(3);
  const auto t1 = rcl::PseudoTask::sample(5, a);
  const auto t2 = rcl::PseudoTask::sample(5, b);
  CHECK(t1.weight == t2.weight);
  CHECK(t1.bias == t2.bias);

  const std::vector<double> rep = {1.0, 0.0, 0.0, 0.0, 0.0};
  CHECK(t1.label(rep.data(), 5) == doctest::Approx(t1.weight[0] + t1.bias));
}

TEST_CASE("verify_theorem_1: identical encoders give zero on both sides") {
  rcl::EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_dim = 3;
  cfg.num_layers = 2;
  cfg.num_classes = 2;
  cfg.seed = 5;
  const rcl::EncoderModel model = rcl::init(cfg);
  rcl::Rng rng(7);
  const Matrix inputs = random_matrix(16, 4, rng);

  const auto report = rcl::verify_theorem_1(model, model, inputs, 50, 11);
  CHECK(report.closed_form_value <= 1e-14);
  CHECK(report.mc_estimate <= 1e-14);
  CHECK(report.min_w_value <= 1e-14);
}

TEST_CASE("verify_theorem_1: empirical mean within 3 SE of the closed form") {
  rcl::EncoderConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dim = 4;
  cfg.num_layers = 2;
  cfg.num_classes = 2;
  cfg.seed = 21;
  const rcl::EncoderModel pre = rcl::init(cfg);
  cfg.seed = 22;
  const rcl::EncoderModel fin = rcl::init(cfg);
  rcl::Rng rng(23);
  const Matrix inputs = random_matrix(20, 5, rng);

  const auto report = rcl::verify_theorem_1(pre, fin, inputs, 500, 31);
  CHECK(report.num_samples == 500);
  CHECK(std::abs(report.mc_estimate - report.closed_form_value) <=
        3.0 * report.mc_standard_error);
  // Theorem A.2 on the bias-augmented matrices.
  CHECK(std::abs(report.min_w_value - report.closed_form_value) <=
        1e-8 * (1.0 + report.closed_form_value));
  // Raw sum consistency.
  CHECK(report.mc_sum == doctest::Approx(report.mc_estimate * 500).epsilon(1e-12));

  const std::string json = report.to_json();
  CHECK(json.find("closed_form_value") != std::string::npos);
}

TEST_CASE("verify_theorem_1 at T=1 reduces to a single bias-augmented sample") {
  rcl::EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_dim = 3;
  cfg.num_layers = 1;
  cfg.num_classes = 2;
  cfg.seed = 41;
  const rcl::EncoderModel pre = rcl::init(cfg);
  cfg.seed = 42;
  const rcl::EncoderModel fin = rcl::init(cfg);
  rcl::Rng rng(43);
  const Matrix inputs = random_matrix(10, 4, rng);

  const auto report = rcl::verify_theorem_1(pre, fin, inputs, 1, 17);
  // One task: the estimate is that task's exact inner minimum, and the
  // standard error over a single sample is zero.
  CHECK(report.mc_estimate == doctest::Approx(report.mc_sum));
  CHECK(report.mc_standard_error == doctest::Approx(0.0));
  CHECK(report.mc_estimate >= 0.0);
}
