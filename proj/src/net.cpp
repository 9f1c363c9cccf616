#include "rcl/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rcl/rng.hpp"

namespace rcl {

namespace {

constexpr int kModelFormatVersion = 1;

double activate(Activation a, double pre) {
  return a == Activation::Tanh ? std::tanh(pre) : std::max(0.0, pre);
}

// Derivative expressed through the post-activation value.
double activate_deriv(Activation a, double post) {
  return a == Activation::Tanh ? 1.0 - post * post : (post > 0.0 ? 1.0 : 0.0);
}

}  // namespace

std::string activation_name(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation: " + name);
}

void EncoderConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || num_layers < 1) {
    throw std::invalid_argument("EncoderConfig: dims and num_layers must be >= 1");
  }
  if (num_classes < 2) throw std::invalid_argument("EncoderConfig: num_classes must be >= 2");
}

std::vector<ParameterSnapshot::Segment> ParameterSnapshot::segments() {
  std::vector<Segment> segs;
  segs.reserve(2 * layer_weights.size() + 2);
  for (std::size_t l = 0; l < layer_weights.size(); ++l) {
    segs.push_back({layer_weights[l].data(), layer_weights[l].size(), false});
    segs.push_back({layer_biases[l].data(), layer_biases[l].size(), true});
  }
  segs.push_back({head_weight.data(), head_weight.size(), false});
  segs.push_back({head_bias.data(), head_bias.size(), true});
  return segs;
}

std::vector<ParameterSnapshot::Segment> ParameterSnapshot::segments() const {
  return const_cast<ParameterSnapshot*>(this)->segments();
}

std::size_t ParameterSnapshot::flat_size() const {
  std::size_t total = 0;
  for (const auto& seg : segments()) total += seg.len;
  return total;
}

void ParameterSnapshot::fill(double v) {
  for (auto& seg : segments()) std::fill(seg.data, seg.data + seg.len, v);
}

bool ParameterSnapshot::operator==(const ParameterSnapshot& other) const {
  const auto a = segments();
  const auto b = other.segments();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].len != b[i].len || a[i].is_bias != b[i].is_bias) return false;
    if (!std::equal(a[i].data, a[i].data + a[i].len, b[i].data)) return false;
  }
  return true;
}

std::size_t EncoderModel::layer_input_dim(std::size_t layer) const {
  return layer == 1 ? config.input_dim : config.hidden_dim;
}

const std::vector<double>& ForwardTrace::representation(std::size_t layer) const {
  if (layer < 1 || layer > layer_outputs.size()) {
    throw std::out_of_range("ForwardTrace: layer out of range");
  }
  return layer_outputs[layer - 1];
}

EncoderModel init(const EncoderConfig& config) {
  config.validate();
  EncoderModel model;
  model.config = config;
  Rng root(config.seed);

  auto glorot = [](Matrix& w, Rng rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  };

  for (std::size_t l = 1; l <= config.num_layers; ++l) {
    Matrix w(config.hidden_dim, model.layer_input_dim(l));
    glorot(w, root.fork(l));
    model.params.layer_weights.push_back(std::move(w));
    model.params.layer_biases.emplace_back(config.hidden_dim, 0.0);
  }
  Matrix head(config.num_classes, config.hidden_dim);
  glorot(head, root.fork(config.num_layers + 1));
  model.params.head_weight = std::move(head);
  model.params.head_bias.assign(config.num_classes, 0.0);
  return model;
}

ParameterSnapshot snapshot(const EncoderModel& model) { return model.params; }

ParameterSnapshot zeros_like(const EncoderModel& model) {
  ParameterSnapshot z = model.params;
  z.fill(0.0);
  return z;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(const std::vector<double>& probs, int label) {
  // Clamp keeps the loss finite when a probability underflows to zero.
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));
}

std::vector<double> cross_entropy_dlogits(const std::vector<double>& probs, int label) {
  std::vector<double> d = probs;
  d[static_cast<std::size_t>(label)] -= 1.0;
  return d;
}

ForwardTrace forward(const EncoderModel& model, const double* x) {
  const auto& cfg = model.config;
  ForwardTrace trace;
  trace.layer_outputs.resize(cfg.num_layers);

  std::vector<double> cur(x, x + cfg.input_dim);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const Matrix& w = model.params.layer_weights[l];
    const auto& b = model.params.layer_biases[l];
    std::vector<double> next(cfg.hidden_dim);
    for (std::size_t i = 0; i < cfg.hidden_dim; ++i) {
      const double* wrow = w.row(i);
      double acc = b[i];
      for (std::size_t j = 0; j < w.cols(); ++j) acc += wrow[j] * cur[j];
      next[i] = activate(cfg.activation, acc);
    }
    trace.layer_outputs[l] = next;
    cur = std::move(next);
  }

  trace.logits.resize(cfg.num_classes);
  for (std::size_t i = 0; i < cfg.num_classes; ++i) {
    const double* wrow = model.params.head_weight.row(i);
    double acc = model.params.head_bias[i];
    for (std::size_t j = 0; j < cfg.hidden_dim; ++j) acc += wrow[j] * cur[j];
    trace.logits[i] = acc;
  }
  trace.probs = softmax(trace.logits);
  return trace;
}

ForwardTrace forward(const EncoderModel& model, const std::vector<double>& x) {
  if (x.size() != model.config.input_dim) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  return forward(model, x.data());
}

Matrix representations(const EncoderModel& model, const Matrix& features, std::size_t layer) {
  if (layer < 1 || layer > model.config.num_layers) {
    throw std::out_of_range("representations: layer out of range");
  }
  if (features.cols() != model.config.input_dim) {
    throw std::invalid_argument("representations: feature dimension mismatch");
  }
  Matrix out(features.rows(), model.config.hidden_dim);
  for (std::size_t j = 0; j < features.rows(); ++j) {
    const ForwardTrace trace = forward(model, features.row(j));
    const auto& h = trace.representation(layer);
    std::copy(h.begin(), h.end(), out.row(j));
  }
  return out;
}

void backprop_sample(const EncoderModel& model, const double* x, const ForwardTrace& trace,
                     const BackSignal& signal, ParameterSnapshot& grad,
                     std::vector<double>* dx) {
  const auto& cfg = model.config;
  const std::size_t L = cfg.num_layers;

  // dL/dh_L accumulated from the head and any direct layer injections.
  std::vector<double> dh(cfg.hidden_dim, 0.0);
  if (!signal.dlogits.empty()) {
    const auto& hL = trace.layer_outputs[L - 1];
    for (std::size_t i = 0; i < cfg.num_classes; ++i) {
      const double g = signal.dlogits[i];
      grad.head_bias[i] += g;
      double* gw = grad.head_weight.row(i);
      const double* wrow = model.params.head_weight.row(i);
      for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
        gw[j] += g * hL[j];
        dh[j] += g * wrow[j];
      }
    }
  }

  for (std::size_t l = L; l >= 1; --l) {
    for (const auto& [inj_layer, inj] : signal.layer_grads) {
      if (inj_layer == l) {
        for (std::size_t i = 0; i < cfg.hidden_dim; ++i) dh[i] += inj[i];
      }
    }

    const auto& h = trace.layer_outputs[l - 1];
    const std::size_t in_dim = model.layer_input_dim(l);
    const double* input = l == 1 ? x : trace.layer_outputs[l - 2].data();

    // Through the activation: dL/dpre = dL/dh * act'(pre).
    std::vector<double> dpre(cfg.hidden_dim);
    for (std::size_t i = 0; i < cfg.hidden_dim; ++i) {
      dpre[i] = dh[i] * activate_deriv(cfg.activation, h[i]);
    }

    std::vector<double> dinput(in_dim, 0.0);
    const Matrix& w = model.params.layer_weights[l - 1];
    Matrix& gw = grad.layer_weights[l - 1];
    auto& gb = grad.layer_biases[l - 1];
    for (std::size_t i = 0; i < cfg.hidden_dim; ++i) {
      const double g = dpre[i];
      gb[i] += g;
      if (g == 0.0) continue;
      double* gwrow = gw.row(i);
      const double* wrow = w.row(i);
      for (std::size_t j = 0; j < in_dim; ++j) {
        gwrow[j] += g * input[j];
        dinput[j] += g * wrow[j];
      }
    }

    if (l == 1) {
      if (dx) *dx = std::move(dinput);
      break;
    }
    dh = std::move(dinput);
  }
}

BatchGradients backward(const EncoderModel& model, const Matrix& features,
                        const std::vector<int>& labels, const LossSpec& spec) {
  if (features.rows() == 0) throw std::invalid_argument("backward: empty batch");
  if (features.rows() != labels.size()) {
    throw std::invalid_argument("backward: features/labels length mismatch");
  }
  for (const auto& term : spec.terms) {
    if (term.kind != "cross_entropy" && term.kind != "constant") {
      throw std::invalid_argument("backward: unknown loss component '" + term.kind + "'");
    }
  }

  BatchGradients out;
  out.grads = zeros_like(model);
  for (std::size_t j = 0; j < features.rows(); ++j) {
    const ForwardTrace trace = forward(model, features.row(j));
    BackSignal signal;
    signal.dlogits.assign(model.config.num_classes, 0.0);
    for (const auto& term : spec.terms) {
      if (term.kind == "constant") {
        out.loss += term.weight / static_cast<double>(features.rows());
        continue;
      }
      out.loss += term.weight * cross_entropy(trace.probs, labels[j]);
      const auto d = cross_entropy_dlogits(trace.probs, labels[j]);
      for (std::size_t i = 0; i < d.size(); ++i) signal.dlogits[i] += term.weight * d[i];
    }
    backprop_sample(model, features.row(j), trace, signal, out.grads);
  }
  return out;
}

namespace {

nlohmann::json vec_json(const std::vector<double>& v) { return nlohmann::json(v); }

nlohmann::json matrix_json(const Matrix& m) {
  return nlohmann::json{{"rows", m.rows()},
                        {"cols", m.cols()},
                        {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

std::string model_to_json(const EncoderModel& model) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["config"] = {{"input_dim", model.config.input_dim},
                 {"hidden_dim", model.config.hidden_dim},
                 {"num_layers", model.config.num_layers},
                 {"activation", activation_name(model.config.activation)},
                 {"num_classes", model.config.num_classes},
                 {"seed", model.config.seed}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    layers.push_back({{"weight", matrix_json(model.params.layer_weights[l])},
                      {"bias", vec_json(model.params.layer_biases[l])}});
  }
  j["layers"] = std::move(layers);
  j["head"] = {{"weight", matrix_json(model.params.head_weight)},
               {"bias", vec_json(model.params.head_bias)}};
  return j.dump(2);
}

EncoderModel model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion) {
    throw std::runtime_error("model_from_json: unsupported format version " +
                             std::to_string(version));
  }
  EncoderModel model;
  const auto& c = j.at("config");
  model.config.input_dim = c.at("input_dim").get<std::size_t>();
  model.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
  model.config.num_layers = c.at("num_layers").get<std::size_t>();
  model.config.activation = activation_from_name(c.at("activation").get<std::string>());
  model.config.num_classes = c.at("num_classes").get<std::size_t>();
  model.config.seed = c.at("seed").get<std::uint64_t>();
  model.config.validate();

  for (const auto& layer : j.at("layers")) {
    model.params.layer_weights.push_back(matrix_from_json(layer.at("weight")));
    model.params.layer_biases.push_back(layer.at("bias").get<std::vector<double>>());
  }
  if (model.params.layer_weights.size() != model.config.num_layers) {
    throw std::runtime_error("model_from_json: layer count mismatch");
  }
  model.params.head_weight = matrix_from_json(j.at("head").at("weight"));
  model.params.head_bias = j.at("head").at("bias").get<std::vector<double>>();
  return model;
}

void save_model(const EncoderModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << model_to_json(model);
}

EncoderModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace rcl
