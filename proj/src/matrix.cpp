#include "rcl/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rcl {

namespace {

constexpr double kSymmetryRelTol = 1e-10;
constexpr double kJacobiRelTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;
constexpr double kPinvRankCutoff = 1e-10;

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: data length does not match rows*cols");
  }
  check_finite("Matrix constructor");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw std::invalid_argument("Matrix: ragged initializer");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
  check_finite("Matrix constructor");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void Matrix::check_finite(const std::string& where) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(where + ": non-finite entry");
    }
  }
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("Matrix multiply: inner dimensions differ");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      double* orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("Matrix add: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("Matrix subtract: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
  return out;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += arow[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double frobenius_sq(const Matrix& m) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) acc += m.data()[i] * m.data()[i];
  return acc;
}

namespace {

double off_diagonal_sq(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return acc;
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& input) {
  const std::size_t n = input.rows();
  if (n != input.cols()) throw std::invalid_argument("sym_eig: matrix is not square");
  const double norm = std::sqrt(frobenius_sq(input));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > kSymmetryRelTol * std::max(1.0, norm)) {
        throw std::invalid_argument("sym_eig: matrix is not symmetric");
      }
    }
  }

  Matrix a = input;
  // Work on the symmetrized copy so the rotations see an exactly symmetric matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = avg;
      a(j, i) = avg;
    }

  Matrix q = Matrix::identity(n);
  const double threshold_sq = kJacobiRelTol * kJacobiRelTol * frobenius_sq(input);

  bool converged = n <= 1 || off_diagonal_sq(a) <= threshold_sq;
  for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apr = a(p, r);
        if (apr == 0.0) continue;
        const double app = a(p, p);
        const double arr = a(r, r);
        const double theta = (arr - app) / (2.0 * apr);
        // Classic stable tangent formula; t is the smaller root.
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akr = a(k, r);
          a(k, p) = c * akp - s * akr;
          a(k, r) = s * akp + c * akr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double ark = a(r, k);
          a(p, k) = c * apk - s * ark;
          a(r, k) = s * apk + c * ark;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double qkp = q(k, p);
          const double qkr = q(k, r);
          q(k, p) = c * qkp - s * qkr;
          q(k, r) = s * qkp + c * qkr;
        }
      }
    }
    converged = off_diagonal_sq(a) <= threshold_sq;
  }
  if (!converged) throw std::runtime_error("sym_eig: Jacobi iteration did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  const double clamp_band = 1e-12 * norm;
  for (std::size_t k = 0; k < n; ++k) {
    double lambda = a(order[k], order[k]);
    if (lambda < 0.0 && lambda >= -clamp_band) lambda = 0.0;
    out.eigenvalues[k] = lambda;
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = q(i, order[k]);
  }
  return out;
}

Matrix pinv(const Matrix& a) {
  a.check_finite("pinv");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  // Eigendecompose the Gram matrix A^T A = V diag(s^2) V^T, then
  // A^+ = V diag(1/s^2) V^T A^T on the retained spectrum.
  const Matrix at = a.transpose();
  const EigenDecomposition eig = sym_eig(at * a);

  double sigma_max_sq = 0.0;
  for (double v : eig.eigenvalues) sigma_max_sq = std::max(sigma_max_sq, v);
  if (sigma_max_sq <= 0.0) return Matrix::zeros(n, m);
  // Relative cutoff applied to the eigenvalues of A^T A. Round-off on an
  // exactly rank-deficient input leaves eigenvalues near 1e-16 * lambda_max,
  // so the squared-domain threshold is what actually zeroes them.
  const double cutoff_sq = kPinvRankCutoff * sigma_max_sq;

  Matrix scaled(n, n);  // V diag(1/s^2) V^T over retained eigenvalues
  for (std::size_t k = 0; k < n; ++k) {
    const double lambda = eig.eigenvalues[k];
    if (lambda <= cutoff_sq) continue;
    const double inv = 1.0 / lambda;
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = eig.eigenvectors(i, k) * inv;
      for (std::size_t j = 0; j < n; ++j) {
        scaled(i, j) += vik * eig.eigenvectors(j, k);
      }
    }
  }
  return scaled * at;
}

Matrix projector(const Matrix& b) {
  b.check_finite("projector");
  return b * pinv(b);
}

}  // namespace rcl
