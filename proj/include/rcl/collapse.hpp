#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcl/matrix.hpp"
#include "rcl/rng.hpp"

namespace rcl {

// Eigenvalue spectrum of a representation matrix's second-moment Z^T Z
// (equal to the nonzero spectrum of the N x N Gram matrix) plus the derived
// diversity statistics.
struct SpectrumReport {
  std::vector<double> eigenvalues;  // nonnegative, non-increasing
  std::size_t num_samples = 0;      // N
  std::size_t dim = 0;              // d

  std::vector<std::pair<int, double>> gm;               // k in {5,10,20} (clipped to d)
  std::vector<std::pair<int, double>> hm;
  std::vector<std::pair<int, double>> normalized_mass;  // k in {1,2,5,10,20}

  std::string to_json() const;
  // One row: method,task,seed,lambda1..lambda32,gm/hm/mass columns.
  static std::string csv_header(std::size_t dim);
  std::string csv_row(const std::string& method, const std::string& task,
                      std::uint64_t seed) const;
};

SpectrumReport gram_spectrum(const Matrix& z);

// Geometric mean of the top-k eigenvalues; 0 if any of them is 0.
double gm_k(const SpectrumReport& report, std::size_t k);

// (sum of reciprocals of the top-k eigenvalues)^-1, taken literally without
// the classical 1/k factor; 0 if any of the top-k eigenvalues is 0.
double hm_k(const SpectrumReport& report, std::size_t k);

// Sum of the top-k eigenvalues divided by the total mass (0 if total is 0).
double normalized_mass_k(const SpectrumReport& report, std::size_t k);

// Full-spectrum values computed through the determinant and trace of Z^T Z
// rather than through the eigenvalues, for cross-checking gm_k/hm_k at k=d.
double gm_full(const Matrix& z);
double hm_full(const Matrix& z);  // throws on singular Z^T Z

// Draws labels y = Z w + eps with eps ~ N(0, I), solves least squares per
// trial, returns the empirical covariance of w_hat - w (theory: (Z^T Z)^-1).
Matrix param_error_simulation(const Matrix& z_fin, const std::vector<double>& true_w,
                              std::size_t noise_trials, Rng& rng);

}  // namespace rcl
