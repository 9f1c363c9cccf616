#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcl/matrix.hpp"
#include "rcl/net.hpp"
#include "rcl/rng.hpp"

namespace rcl {

enum class RegKind {
  None,
  CapcortI,
  CapcortMlp,
  WeightConsolidation,
  R3F,
  DataAugment,
  Reinit,
  MeSCL,
};

std::string reg_kind_name(RegKind kind);
RegKind reg_kind_from_name(const std::string& name);

struct RegularizerSpec {
  RegKind kind = RegKind::None;
  double lambda = 0.0;
  std::size_t layer = 0;  // CapcortI representation tap; 0 resolves to the top layer
  std::size_t mlp_depth = 2;
  double noise_delta = 1e-5;
  double temperature = 1.0;
  std::size_t reinit_k = 1;
  std::size_t center_updates = 10;

  void validate(std::size_t num_layers) const;
  std::size_t resolved_layer(std::size_t num_layers) const {
    return layer == 0 ? num_layers : layer;
  }
};

// Hyperparameter search grids for the regularization coefficient.
std::vector<double> default_lambda_grid(RegKind kind);

// Shallow perceptron phi: width equals the representation dim throughout,
// tanh on hidden layers, linear output. Depth 1 is a plain linear map.
struct MlpHead {
  std::size_t dim = 0;
  std::vector<Matrix> weights;  // depth entries, dim x dim
  std::vector<std::vector<double>> biases;

  std::size_t depth() const { return weights.size(); }

  static MlpHead glorot(std::size_t dim, std::size_t depth, std::uint64_t seed);
  static MlpHead identity(std::size_t dim);  // single linear layer, W = I

  std::vector<double> apply(const std::vector<double>& z) const;
  std::vector<ParameterSnapshot::Segment> segments();
  std::vector<ParameterSnapshot::Segment> segments() const;
  MlpHead zeros_like() const;
};

struct RepLossGrad {
  double loss = 0.0;
  Matrix dz_fin;
};

// sum_j ||z_pre_j - z_fin_j||^2 with gradient 2 (z_fin - z_pre).
RepLossGrad capcort_i_loss(const Matrix& z_fin, const Matrix& z_pre);

struct MlpLossGrad {
  double loss = 0.0;
  Matrix dz_fin;
  MlpHead dhead;
};

// sum_j ||z_pre_j - phi(z_fin_j)||^2 at the current phi, with exact gradients
// for both the representations and phi's parameters.
MlpLossGrad capcort_mlp_loss(const Matrix& z_fin, const Matrix& z_pre, const MlpHead& head);

struct WcLossGrad {
  double loss = 0.0;
  ParameterSnapshot grad;
};

// Squared parameter drift over non-bias coordinates.
WcLossGrad wc_loss(const ParameterSnapshot& theta_fin, const ParameterSnapshot& theta_pre);

struct ModelLossGrad {
  double loss = 0.0;
  ParameterSnapshot grads;
};

// KL(p||q) + KL(q||p) for two probability vectors.
double symmetric_kl(const std::vector<double>& p, const std::vector<double>& q);

// Symmetric KL between class probabilities on clean and noise-perturbed
// inputs; noise enters at the encoder input, one draw per sample.
ModelLossGrad r3f_loss(const EncoderModel& model, const Matrix& features, double delta, Rng& rng);

// Full data-augmentation objective: CE on clean plus lambda-weighted CE on
// one noisy copy per sample.
ModelLossGrad da_loss(const EncoderModel& model, const Matrix& features,
                      const std::vector<int>& labels, double lambda, double delta, Rng& rng);

// Redraws the top-k encoder layers' weights from N(0, 0.02^2) with zero
// biases, and the classification head the same way.
void reinit_top_k(EncoderModel& model, std::size_t k, Rng& rng);

// Class centers for memory-efficient supervised contrastive loss. Classes
// with fewer than two members at refresh time are excluded (and recorded).
struct SclState {
  Matrix centers;                   // num_classes x dim; inactive rows zero
  std::vector<std::size_t> counts;  // members per class at last refresh
  std::vector<int> active_classes;
  std::vector<std::string> warnings;

  void refresh(const Matrix& embeddings, const std::vector<int>& labels, int num_classes);
};

// Relaxed supervised contrastive loss against fixed class centers.
RepLossGrad mescl_loss(const Matrix& embeddings, const std::vector<int>& labels,
                       const SclState& state, double temperature);

}  // namespace rcl
