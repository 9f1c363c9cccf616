#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rcl/matrix.hpp"

namespace rcl {

enum class Activation { Tanh, Relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct EncoderConfig {
  std::size_t input_dim = 8;
  std::size_t hidden_dim = 16;
  std::size_t num_layers = 3;  // L >= 1, counted from the input
  Activation activation = Activation::Tanh;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

// All trainable parameters of an encoder + head. Used both for model state
// and for gradients (value semantics; a snapshot is just a copy).
struct ParameterSnapshot {
  std::vector<Matrix> layer_weights;              // L entries, hidden x prev
  std::vector<std::vector<double>> layer_biases;  // L entries
  Matrix head_weight;                             // classes x hidden
  std::vector<double> head_bias;                  // classes

  struct Segment {
    double* data;
    std::size_t len;
    bool is_bias;
  };
  // Flat view over every parameter, weights and biases tagged. Layer order:
  // (W_1, b_1), ..., (W_L, b_L), (W_head, b_head).
  std::vector<Segment> segments();
  std::vector<Segment> segments() const;  // const contents, mutable view for reads

  std::size_t flat_size() const;
  void fill(double v);

  bool operator==(const ParameterSnapshot& other) const;
};

struct EncoderModel {
  EncoderConfig config;
  ParameterSnapshot params;

  std::size_t layer_input_dim(std::size_t layer) const;  // 1-based
};

struct ForwardTrace {
  std::vector<std::vector<double>> layer_outputs;  // h_1 ... h_L
  std::vector<double> logits;
  std::vector<double> probs;

  const std::vector<double>& representation(std::size_t layer) const;  // 1-based
};

// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases,
// deterministic per config.seed.
EncoderModel init(const EncoderConfig& config);

ParameterSnapshot snapshot(const EncoderModel& model);
ParameterSnapshot zeros_like(const EncoderModel& model);

ForwardTrace forward(const EncoderModel& model, const double* x);
ForwardTrace forward(const EncoderModel& model, const std::vector<double>& x);

// Row j = representation of sample j at `layer` (1-based, 1..L).
Matrix representations(const EncoderModel& model, const Matrix& features, std::size_t layer);

// Gradient seeds for one sample's reverse pass: dL/dlogits and any number of
// dL/dh_layer injections (1-based layer index).
struct BackSignal {
  std::vector<double> dlogits;
  std::vector<std::pair<std::size_t, std::vector<double>>> layer_grads;
};

// Accumulates parameter gradients for one sample into grad; optionally also
// returns dL/dx through the whole stack (needed by input-noise regularizers).
void backprop_sample(const EncoderModel& model, const double* x, const ForwardTrace& trace,
                     const BackSignal& signal, ParameterSnapshot& grad,
                     std::vector<double>* dx = nullptr);

// softmax with max-shift; probabilities sum to 1.
std::vector<double> softmax(const std::vector<double>& logits);
// -log p[label]
double cross_entropy(const std::vector<double>& probs, int label);
// d(CE)/dlogits = probs - onehot(label)
std::vector<double> cross_entropy_dlogits(const std::vector<double>& probs, int label);

struct LossTerm {
  std::string kind;  // "cross_entropy" | "constant"
  double weight = 1.0;
};

struct LossSpec {
  std::vector<LossTerm> terms;
};

struct BatchGradients {
  double loss = 0.0;
  ParameterSnapshot grads;
};

// Composite loss over a labeled batch. Throws on an unknown loss component.
BatchGradients backward(const EncoderModel& model, const Matrix& features,
                        const std::vector<int>& labels, const LossSpec& spec);

// Model (de)serialization: JSON document with config, format version and
// decimal parameter arrays. Round-trips bit-exactly.
std::string model_to_json(const EncoderModel& model);
EncoderModel model_from_json(const std::string& text);
void save_model(const EncoderModel& model, const std::string& path);
EncoderModel load_model(const std::string& path);

}  // namespace rcl
