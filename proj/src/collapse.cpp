#include "rcl/collapse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rcl/format.hpp"

namespace rcl {

namespace {

const int kGmHmKs[] = {5, 10, 20};
const int kMassKs[] = {1, 2, 5, 10, 20};

// LU decomposition with partial pivoting; returns false on singularity.
// Kept separate from the Jacobi eigensolver so the determinant/trace routes
// stay independent of the eigenvalue route.
bool lu_decompose(Matrix& a, std::vector<std::size_t>& perm, int& sign) {
  const std::size_t n = a.rows();
  perm.resize(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  sign = 1;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::abs(a(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > best) {
        best = std::abs(a(r, col));
        pivot = r;
      }
    }
    if (best == 0.0) return false;
    if (pivot != col) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a(col, k), a(pivot, k));
      std::swap(perm[col], perm[pivot]);
      sign = -sign;
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      a(r, col) = f;
      for (std::size_t k = col + 1; k < n; ++k) a(r, k) -= f * a(col, k);
    }
  }
  return true;
}

void lu_solve(const Matrix& lu, const std::vector<std::size_t>& perm, const std::vector<double>& b,
              std::vector<double>& x) {
  const std::size_t n = lu.rows();
  x.resize(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) x[i] -= lu(i, j) * x[j];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu(i, j) * x[j];
    x[i] /= lu(i, i);
  }
}

Matrix second_moment(const Matrix& z) {
  z.check_finite("gram_spectrum");
  const std::size_t d = z.cols();
  Matrix g(d, d);
  for (std::size_t j = 0; j < z.rows(); ++j) {
    const double* row = z.row(j);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) g(a, b) += row[a] * row[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b) g(a, b) = g(b, a);
  return g;
}

}  // namespace

SpectrumReport gram_spectrum(const Matrix& z) {
  if (z.rows() < 1 || z.cols() < 1) throw std::invalid_argument("gram_spectrum: empty matrix");
  SpectrumReport report;
  report.num_samples = z.rows();
  report.dim = z.cols();
  report.eigenvalues = sym_eig(second_moment(z)).eigenvalues;
  // Round-off can leave tiny negatives on a PSD spectrum; clamp them.
  for (double& v : report.eigenvalues) v = std::max(v, 0.0);

  for (int k : kGmHmKs) {
    const std::size_t kk = std::min<std::size_t>(k, report.dim);
    report.gm.emplace_back(k, gm_k(report, kk));
    report.hm.emplace_back(k, hm_k(report, kk));
  }
  for (int k : kMassKs) {
    report.normalized_mass.emplace_back(k, normalized_mass_k(report, std::min<std::size_t>(k, report.dim)));
  }
  return report;
}

double gm_k(const SpectrumReport& report, std::size_t k) {
  if (k < 1 || k > report.eigenvalues.size()) throw std::out_of_range("gm_k: k out of range");
  double log_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (report.eigenvalues[i] <= 0.0) return 0.0;
    log_sum += std::log(report.eigenvalues[i]);
  }
  return std::exp(log_sum / static_cast<double>(k));
}

double hm_k(const SpectrumReport& report, std::size_t k) {
  if (k < 1 || k > report.eigenvalues.size()) throw std::out_of_range("hm_k: k out of range");
  double recip_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (report.eigenvalues[i] <= 0.0) return 0.0;
    recip_sum += 1.0 / report.eigenvalues[i];
  }
  return 1.0 / recip_sum;
}

double normalized_mass_k(const SpectrumReport& report, std::size_t k) {
  if (k < 1 || k > report.eigenvalues.size()) {
    throw std::out_of_range("normalized_mass_k: k out of range");
  }
  double total = 0.0, top = 0.0;
  for (std::size_t i = 0; i < report.eigenvalues.size(); ++i) {
    total += report.eigenvalues[i];
    if (i < k) top += report.eigenvalues[i];
  }
  return total > 0.0 ? top / total : 0.0;
}

double gm_full(const Matrix& z) {
  Matrix g = second_moment(z);
  const std::size_t d = g.rows();
  std::vector<std::size_t> perm;
  int sign = 0;
  if (!lu_decompose(g, perm, sign)) return 0.0;  // exactly singular: det = 0
  double log_det = 0.0;
  int total_sign = sign;
  for (std::size_t i = 0; i < d; ++i) {
    const double u = g(i, i);
    if (u < 0.0) total_sign = -total_sign;
    if (u == 0.0) return 0.0;
    log_det += std::log(std::abs(u));
  }
  if (total_sign < 0) return 0.0;  // PSD up to round-off; treat as collapsed
  return std::exp(log_det / static_cast<double>(d));
}

double hm_full(const Matrix& z) {
  Matrix g = second_moment(z);
  const std::size_t d = g.rows();
  std::vector<std::size_t> perm;
  int sign = 0;
  if (!lu_decompose(g, perm, sign)) {
    throw std::runtime_error("hm_full: Z^T Z is singular");
  }
  // trace(G^-1) = sum_i e_i^T G^-1 e_i via one solve per basis vector.
  double trace = 0.0;
  std::vector<double> e(d, 0.0), x;
  for (std::size_t i = 0; i < d; ++i) {
    e[i] = 1.0;
    lu_solve(g, perm, e, x);
    trace += x[i];
    e[i] = 0.0;
  }
  if (!(trace > 0.0) || !std::isfinite(trace)) {
    throw std::runtime_error("hm_full: Z^T Z is numerically singular");
  }
  return 1.0 / trace;
}

Matrix param_error_simulation(const Matrix& z_fin, const std::vector<double>& true_w,
                              std::size_t noise_trials, Rng& rng) {
  if (noise_trials < 1000) {
    throw std::invalid_argument("param_error_simulation: need at least 1000 trials");
  }
  const std::size_t n = z_fin.rows();
  const std::size_t d = z_fin.cols();
  if (true_w.size() != d) throw std::invalid_argument("param_error_simulation: w dimension");

  Matrix g = second_moment(z_fin);
  std::vector<std::size_t> perm;
  int sign = 0;
  if (!lu_decompose(g, perm, sign)) {
    throw std::runtime_error("param_error_simulation: singular design");
  }

  const std::vector<double> clean = matvec(z_fin, true_w);
  Matrix cov(d, d);
  std::vector<double> y(n), rhs(d), w_hat;
  for (std::size_t trial = 0; trial < noise_trials; ++trial) {
    for (std::size_t j = 0; j < n; ++j) y[j] = clean[j] + rng.normal();
    // Normal equations: G w_hat = Z^T y.
    std::fill(rhs.begin(), rhs.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double* row = z_fin.row(j);
      for (std::size_t k = 0; k < d; ++k) rhs[k] += row[k] * y[j];
    }
    lu_solve(g, perm, rhs, w_hat);
    for (std::size_t a = 0; a < d; ++a) {
      const double ea = w_hat[a] - true_w[a];
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += ea * (w_hat[b] - true_w[b]);
    }
  }
  for (std::size_t i = 0; i < cov.size(); ++i) {
    cov.data()[i] /= static_cast<double>(noise_trials);
  }
  return cov;
}

std::string SpectrumReport::to_json() const {
  nlohmann::json j;
  j["num_samples"] = num_samples;
  j["dim"] = dim;
  j["eigenvalues"] = eigenvalues;
  for (const auto& [k, v] : gm) j["gm"][std::to_string(k)] = v;
  for (const auto& [k, v] : hm) j["hm"][std::to_string(k)] = v;
  for (const auto& [k, v] : normalized_mass) j["normalized_mass"][std::to_string(k)] = v;
  return j.dump(2);
}

std::string SpectrumReport::csv_header(std::size_t dim) {
  std::ostringstream out;
  out << "method,task,seed";
  const std::size_t shown = std::min<std::size_t>(dim, 32);
  for (std::size_t i = 1; i <= shown; ++i) out << ",lambda" << i;
  for (int k : kGmHmKs) out << ",gm" << k;
  for (int k : kGmHmKs) out << ",hm" << k;
  for (int k : kMassKs) out << ",mass" << k;
  return out.str();
}

std::string SpectrumReport::csv_row(const std::string& method, const std::string& task,
                                    std::uint64_t seed) const {
  std::ostringstream out;
  out << method << ',' << task << ',' << seed;
  auto put = [&](double v) { out << ',' << format_double(v); };
  const std::size_t shown = std::min<std::size_t>(dim, 32);
  for (std::size_t i = 0; i < shown; ++i) put(eigenvalues[i]);
  for (const auto& [k, v] : gm) put(v);
  for (const auto& [k, v] : hm) put(v);
  for (const auto& [k, v] : normalized_mass) put(v);
  return out.str();
}

}  // namespace rcl
