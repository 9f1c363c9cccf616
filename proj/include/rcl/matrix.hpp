#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace rcl {

// Dense row-major matrix of doubles. All entries must be finite;
// construction throws on NaN/Inf.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix zeros(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  Matrix transpose() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  // Throws std::invalid_argument naming `where` if any entry is non-finite.
  void check_finite(const std::string& where) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // sorted non-increasing
  Matrix eigenvectors;              // orthonormal columns, aligned with eigenvalues
};

// Symmetric eigendecomposition by cyclic Jacobi rotations. Converges when the
// off-diagonal Frobenius mass drops below 1e-12 * ||A||_F (cap 100 sweeps).
// Eigenvalues of a PSD input within -1e-12 * ||A||_F of zero are clamped to 0.
// Throws on non-square or asymmetric input; throws on non-convergence.
EigenDecomposition sym_eig(const Matrix& a);

// Moore-Penrose pseudo-inverse via sym_eig on A^T A. Singular values below
// 1e-10 * sigma_max are treated as zero.
Matrix pinv(const Matrix& a);

// Orthogonal projector onto the column space of B: P = B (B^T B)^+ B^T.
Matrix projector(const Matrix& b);

// Sum of squared entries (squared Frobenius norm).
double frobenius_sq(const Matrix& m);

}  // namespace rcl
