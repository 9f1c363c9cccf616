#include "rcl/regularize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcl {

std::string reg_kind_name(RegKind kind) {
  switch (kind) {
    case RegKind::None: return "none";
    case RegKind::CapcortI: return "capcort_i";
    case RegKind::CapcortMlp: return "capcort_mlp";
    case RegKind::WeightConsolidation: return "wc";
    case RegKind::R3F: return "r3f";
    case RegKind::DataAugment: return "da";
    case RegKind::Reinit: return "reinit";
    case RegKind::MeSCL: return "mescl";
  }
  return "none";
}

RegKind reg_kind_from_name(const std::string& name) {
  if (name == "none") return RegKind::None;
  if (name == "capcort_i") return RegKind::CapcortI;
  if (name == "capcort_mlp") return RegKind::CapcortMlp;
  if (name == "wc") return RegKind::WeightConsolidation;
  if (name == "r3f") return RegKind::R3F;
  if (name == "da") return RegKind::DataAugment;
  if (name == "reinit") return RegKind::Reinit;
  if (name == "mescl") return RegKind::MeSCL;
  throw std::invalid_argument("unknown regularizer: " + name);
}

void RegularizerSpec::validate(std::size_t num_layers) const {
  if (lambda < 0.0) throw std::invalid_argument("RegularizerSpec: lambda must be >= 0");
  if (noise_delta < 0.0) throw std::invalid_argument("RegularizerSpec: noise_delta must be >= 0");
  if (temperature <= 0.0) throw std::invalid_argument("RegularizerSpec: temperature must be > 0");
  if (mlp_depth < 1) throw std::invalid_argument("RegularizerSpec: mlp_depth must be >= 1");
  if (layer > num_layers) throw std::invalid_argument("RegularizerSpec: layer out of range");
  if (kind == RegKind::Reinit && (reinit_k < 1 || reinit_k > num_layers)) {
    throw std::invalid_argument("RegularizerSpec: reinit_k out of range");
  }
  if (kind == RegKind::MeSCL && center_updates < 1) {
    throw std::invalid_argument("RegularizerSpec: center_updates must be >= 1");
  }
}

std::vector<double> default_lambda_grid(RegKind kind) {
  switch (kind) {
    case RegKind::CapcortI:
    case RegKind::CapcortMlp:
    case RegKind::WeightConsolidation:
      return {0.01, 0.05, 0.1, 0.5};
    case RegKind::DataAugment:
      return {0.05, 0.1, 0.2, 0.4, 0.8};
    case RegKind::R3F:
      return {0.1, 0.5, 1.0, 5.0};
    case RegKind::MeSCL:
      return {0.5, 0.7, 0.9};  // convex-combination weight on the CE term
    default:
      return {0.0};
  }
}

MlpHead MlpHead::glorot(std::size_t dim, std::size_t depth, std::uint64_t seed) {
  if (depth < 1) throw std::invalid_argument("MlpHead: depth must be >= 1");
  MlpHead head;
  head.dim = dim;
  Rng root(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(dim + dim));
  for (std::size_t t = 0; t < depth; ++t) {
    Matrix w(dim, dim);
    Rng rng = root.fork(t);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    head.weights.push_back(std::move(w));
    head.biases.emplace_back(dim, 0.0);
  }
  return head;
}

MlpHead MlpHead::identity(std::size_t dim) {
  MlpHead head;
  head.dim = dim;
  head.weights.push_back(Matrix::identity(dim));
  head.biases.emplace_back(dim, 0.0);
  return head;
}

std::vector<double> MlpHead::apply(const std::vector<double>& z) const {
  std::vector<double> cur = z;
  for (std::size_t t = 0; t < depth(); ++t) {
    std::vector<double> next = matvec(weights[t], cur);
    for (std::size_t i = 0; i < dim; ++i) {
      next[i] += biases[t][i];
      if (t + 1 < depth()) next[i] = std::tanh(next[i]);
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<ParameterSnapshot::Segment> MlpHead::segments() {
  std::vector<ParameterSnapshot::Segment> segs;
  for (std::size_t t = 0; t < depth(); ++t) {
    segs.push_back({weights[t].data(), weights[t].size(), false});
    segs.push_back({biases[t].data(), biases[t].size(), true});
  }
  return segs;
}

std::vector<ParameterSnapshot::Segment> MlpHead::segments() const {
  return const_cast<MlpHead*>(this)->segments();
}

MlpHead MlpHead::zeros_like() const {
  MlpHead z = *this;
  for (auto& w : z.weights) std::fill(w.data(), w.data() + w.size(), 0.0);
  for (auto& b : z.biases) std::fill(b.begin(), b.end(), 0.0);
  return z;
}

RepLossGrad capcort_i_loss(const Matrix& z_fin, const Matrix& z_pre) {
  if (!z_fin.same_shape(z_pre)) throw std::invalid_argument("capcort_i_loss: shape mismatch");
  RepLossGrad out;
  out.dz_fin = Matrix(z_fin.rows(), z_fin.cols());
  for (std::size_t i = 0; i < z_fin.size(); ++i) {
    const double diff = z_fin.data()[i] - z_pre.data()[i];
    out.loss += diff * diff;
    out.dz_fin.data()[i] = 2.0 * diff;
  }
  return out;
}

MlpLossGrad capcort_mlp_loss(const Matrix& z_fin, const Matrix& z_pre, const MlpHead& head) {
  if (!z_fin.same_shape(z_pre)) throw std::invalid_argument("capcort_mlp_loss: shape mismatch");
  if (z_fin.cols() != head.dim) throw std::invalid_argument("capcort_mlp_loss: head width mismatch");

  MlpLossGrad out;
  out.dz_fin = Matrix(z_fin.rows(), z_fin.cols());
  out.dhead = head.zeros_like();
  const std::size_t D = head.depth();
  const std::size_t dim = head.dim;

  for (std::size_t j = 0; j < z_fin.rows(); ++j) {
    // Forward, keeping every layer output for the reverse pass.
    std::vector<std::vector<double>> acts(D + 1);
    acts[0].assign(z_fin.row(j), z_fin.row(j) + dim);
    for (std::size_t t = 0; t < D; ++t) {
      std::vector<double> next = matvec(head.weights[t], acts[t]);
      for (std::size_t i = 0; i < dim; ++i) {
        next[i] += head.biases[t][i];
        if (t + 1 < D) next[i] = std::tanh(next[i]);
      }
      acts[t + 1] = std::move(next);
    }

    std::vector<double> delta(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const double r = acts[D][i] - z_pre(j, i);
      out.loss += r * r;
      delta[i] = 2.0 * r;
    }

    for (std::size_t t = D; t >= 1; --t) {
      const auto& input = acts[t - 1];
      std::vector<double> dinput(dim, 0.0);
      Matrix& gw = out.dhead.weights[t - 1];
      auto& gb = out.dhead.biases[t - 1];
      for (std::size_t i = 0; i < dim; ++i) {
        const double g = delta[i];
        gb[i] += g;
        double* gwrow = gw.row(i);
        const double* wrow = head.weights[t - 1].row(i);
        for (std::size_t k = 0; k < dim; ++k) {
          gwrow[k] += g * input[k];
          dinput[k] += g * wrow[k];
        }
      }
      if (t >= 2) {
        // Input of layer t was a tanh output; fold in its derivative.
        for (std::size_t k = 0; k < dim; ++k) dinput[k] *= 1.0 - input[k] * input[k];
      }
      delta = std::move(dinput);
    }
    for (std::size_t k = 0; k < dim; ++k) out.dz_fin(j, k) = delta[k];
  }
  return out;
}

WcLossGrad wc_loss(const ParameterSnapshot& theta_fin, const ParameterSnapshot& theta_pre) {
  const auto fin = theta_fin.segments();
  const auto pre = theta_pre.segments();
  if (fin.size() != pre.size()) throw std::invalid_argument("wc_loss: incompatible snapshots");

  WcLossGrad out;
  out.grad = theta_fin;
  out.grad.fill(0.0);
  const auto grad = out.grad.segments();
  for (std::size_t s = 0; s < fin.size(); ++s) {
    if (fin[s].len != pre[s].len) throw std::invalid_argument("wc_loss: incompatible snapshots");
    if (fin[s].is_bias) continue;
    for (std::size_t i = 0; i < fin[s].len; ++i) {
      const double diff = fin[s].data[i] - pre[s].data[i];
      out.loss += diff * diff;
      grad[s].data[i] = 2.0 * diff;
    }
  }
  return out;
}

namespace {

// d(KL(p||q) + KL(q||p)) / d logits of p, with q treated as constant:
// through softmax, dL/da_k = p_k (g_k - sum_j p_j g_j) where g = dL/dp.
std::vector<double> symkl_dlogits(const std::vector<double>& p, const std::vector<double>& q) {
  const std::size_t n = p.size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    // d/dp_i [ sum p log(p/q) + sum q log(q/p) ] = log(p_i/q_i) + 1 - q_i/p_i
    g[i] = std::log(p[i] / q[i]) + 1.0 - q[i] / p[i];
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += p[i] * g[i];
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = p[i] * (g[i] - mean);
  return d;
}

}  // namespace

double symmetric_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    kl += p[i] * std::log(p[i] / q[i]) + q[i] * std::log(q[i] / p[i]);
  }
  return kl;
}

ModelLossGrad r3f_loss(const EncoderModel& model, const Matrix& features, double delta,
                       Rng& rng) {
  if (delta < 0.0) throw std::invalid_argument("r3f_loss: delta must be >= 0");
  ModelLossGrad out;
  out.grads = zeros_like(model);
  const std::size_t dim = model.config.input_dim;
  const double stddev = std::sqrt(delta);

  for (std::size_t j = 0; j < features.rows(); ++j) {
    std::vector<double> noisy(features.row(j), features.row(j) + dim);
    for (double& v : noisy) v += stddev * rng.normal();

    const ForwardTrace clean = forward(model, features.row(j));
    const ForwardTrace perturbed = forward(model, noisy.data());
    out.loss += symmetric_kl(clean.probs, perturbed.probs);

    // Both branches depend on the parameters; backprop each with the other
    // branch's distribution held fixed.
    BackSignal clean_signal;
    clean_signal.dlogits = symkl_dlogits(clean.probs, perturbed.probs);
    backprop_sample(model, features.row(j), clean, clean_signal, out.grads);

    BackSignal noisy_signal;
    noisy_signal.dlogits = symkl_dlogits(perturbed.probs, clean.probs);
    backprop_sample(model, noisy.data(), perturbed, noisy_signal, out.grads);
  }
  return out;
}

ModelLossGrad da_loss(const EncoderModel& model, const Matrix& features,
                      const std::vector<int>& labels, double lambda, double delta, Rng& rng) {
  if (delta < 0.0) throw std::invalid_argument("da_loss: delta must be >= 0");
  ModelLossGrad out;
  out.grads = zeros_like(model);
  const std::size_t dim = model.config.input_dim;
  const double stddev = std::sqrt(delta);

  for (std::size_t j = 0; j < features.rows(); ++j) {
    const ForwardTrace clean = forward(model, features.row(j));
    out.loss += cross_entropy(clean.probs, labels[j]);
    BackSignal clean_signal;
    clean_signal.dlogits = cross_entropy_dlogits(clean.probs, labels[j]);
    backprop_sample(model, features.row(j), clean, clean_signal, out.grads);

    std::vector<double> noisy(features.row(j), features.row(j) + dim);
    for (double& v : noisy) v += stddev * rng.normal();
    const ForwardTrace perturbed = forward(model, noisy.data());
    out.loss += lambda * cross_entropy(perturbed.probs, labels[j]);
    BackSignal noisy_signal;
    noisy_signal.dlogits = cross_entropy_dlogits(perturbed.probs, labels[j]);
    for (double& v : noisy_signal.dlogits) v *= lambda;
    backprop_sample(model, noisy.data(), perturbed, noisy_signal, out.grads);
  }
  return out;
}

void reinit_top_k(EncoderModel& model, std::size_t k, Rng& rng) {
  const std::size_t L = model.config.num_layers;
  if (k < 1 || k > L) throw std::invalid_argument("reinit_top_k: k out of range");
  for (std::size_t l = L - k; l < L; ++l) {
    Matrix& w = model.params.layer_weights[l];
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.02 * rng.normal();
    std::fill(model.params.layer_biases[l].begin(), model.params.layer_biases[l].end(), 0.0);
  }
  // Fine-tuning always starts from a fresh classification head; redraw it too.
  Matrix& hw = model.params.head_weight;
  for (std::size_t i = 0; i < hw.size(); ++i) hw.data()[i] = 0.02 * rng.normal();
  std::fill(model.params.head_bias.begin(), model.params.head_bias.end(), 0.0);
}

void SclState::refresh(const Matrix& embeddings, const std::vector<int>& labels,
                       int num_classes) {
  if (embeddings.rows() != labels.size()) {
    throw std::invalid_argument("SclState::refresh: embeddings/labels mismatch");
  }
  centers = Matrix(num_classes, embeddings.cols());
  counts.assign(num_classes, 0);
  active_classes.clear();

  for (std::size_t j = 0; j < embeddings.rows(); ++j) {
    const int y = labels[j];
    counts[y]++;
    for (std::size_t k = 0; k < embeddings.cols(); ++k) centers(y, k) += embeddings(j, k);
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] >= 2) {
      for (std::size_t k = 0; k < embeddings.cols(); ++k) {
        centers(c, k) /= static_cast<double>(counts[c]);
      }
      active_classes.push_back(c);
    } else {
      for (std::size_t k = 0; k < embeddings.cols(); ++k) centers(c, k) = 0.0;
      warnings.push_back("class " + std::to_string(c) + " excluded at refresh (" +
                         std::to_string(counts[c]) + " members)");
    }
  }
}

RepLossGrad mescl_loss(const Matrix& embeddings, const std::vector<int>& labels,
                       const SclState& state, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("mescl_loss: temperature must be > 0");
  if (state.active_classes.size() < 2) {
    throw std::invalid_argument("mescl_loss: need at least 2 active classes");
  }

  RepLossGrad out;
  out.dz_fin = Matrix(embeddings.rows(), embeddings.cols());
  const std::size_t dim = embeddings.cols();

  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const int yi = labels[i];
    // Classes competing for sample i: active classes other than its own.
    std::vector<int> rivals;
    for (int c : state.active_classes)
      if (c != yi) rivals.push_back(c);
    if (rivals.empty()) continue;

    std::vector<double> scores(rivals.size());
    double max_score = -1e300;
    for (std::size_t r = 0; r < rivals.size(); ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += embeddings(i, k) * state.centers(rivals[r], k);
      scores[r] = dot / temperature;
      max_score = std::max(max_score, scores[r]);
    }
    double weighted_sum = 0.0;
    for (std::size_t r = 0; r < rivals.size(); ++r) {
      weighted_sum +=
          static_cast<double>(state.counts[rivals[r]]) * std::exp(scores[r] - max_score);
    }
    const double log_denom = max_score + std::log(weighted_sum);

    const double m = static_cast<double>(rivals.size());
    for (std::size_t r = 0; r < rivals.size(); ++r) {
      out.loss += -(scores[r] - log_denom);
    }
    // d/dz_i: -(1/tau) sum_j c_j + m * softmax-weighted mean of c_k / tau.
    for (std::size_t r = 0; r < rivals.size(); ++r) {
      const double soft =
          static_cast<double>(state.counts[rivals[r]]) * std::exp(scores[r] - max_score) /
          weighted_sum;
      for (std::size_t k = 0; k < dim; ++k) {
        out.dz_fin(i, k) += (m * soft - 1.0) * state.centers(rivals[r], k) / temperature;
      }
    }
  }
  return out;
}

}  // namespace rcl
