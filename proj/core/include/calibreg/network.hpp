#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calibreg/matrix.hpp"
#include "calibreg/rng.hpp"

namespace calibreg {

enum class Activation { kRelu, kTanh };

enum class Mode { kTrain, kEval };

struct DenseLayer {
  Matrix weight;             // in_dim x out_dim
  std::vector<double> bias;  // out_dim
};

/// Backprop cache produced by forward(). layer_inputs[i] is the batch fed to
/// layer i (post-dropout); hidden_activations[i] is hidden layer i's
/// activation before dropout; dropout_masks holds the scaled keep masks used
/// in train mode (empty otherwise).
struct ForwardTrace {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> hidden_activations;
  std::vector<Matrix> dropout_masks;
  bool training = false;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

struct ForwardResult {
  Matrix logits;
  ForwardTrace trace;
};

struct LossResult {
  double loss;
  Matrix dlogits;
};

/// Feedforward classifier: dense layers with a shared activation, optional
/// inverted dropout after each hidden activation, and identity on the final
/// (logit) layer.
class Network {
 public:
  Network() = default;
  Network(std::vector<DenseLayer> layers, Activation activation, double dropout_rate);

  /// He fan-in Gaussian weights (std sqrt(2/fan_in)), zero biases.
  /// dims = {input, hidden..., n_classes}; needs at least input and output.
  static Network he_initialized(const std::vector<std::size_t>& dims,
                                Activation activation, double dropout_rate, Rng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t n_layers() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Activation activation() const { return activation_; }
  double dropout_rate() const { return dropout_rate_; }

  /// In eval mode dropout is skipped entirely (inverted-dropout convention:
  /// train mode divides kept activations by the keep probability). rng is
  /// consumed only by train-mode dropout.
  ForwardResult forward(const Matrix& batch, Mode mode, Rng* rng = nullptr) const;

  Gradients zero_gradients() const;

  std::size_t parameter_count() const;
  std::vector<double> flatten_parameters() const;
  void unflatten_parameters(const std::vector<double>& flat);

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_ = Activation::kRelu;
  double dropout_rate_ = 0.0;
};

/// Row-wise stabilized softmax (max subtraction). Rows sum to 1 within 1e-12
/// and every entry is strictly positive for finite logits.
Matrix softmax(const Matrix& logits);

/// Mean negative log-likelihood of the true labels with its logit gradient
/// (softmax - onehot) / m, both computed through the stabilized log-sum-exp.
LossResult nll_loss(const Matrix& logits, const std::vector<int>& labels);

/// Exact chain rule through the trace produced by the matching forward call.
Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits);

/// Mean over n_samples train-mode softmax outputs. Requires a positive
/// dropout rate; rows of the result sum to 1.
Matrix predict_mc_dropout(const Network& net, const Matrix& batch, int n_samples,
                          Rng& rng);

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

}  // namespace calibreg
