#include "calibreg/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace calibreg {

namespace {

void apply_activation(Matrix& m, Activation act) {
  double* p = m.data();
  if (act == Activation::kRelu) {
    for (std::size_t i = 0; i < m.size(); ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) p[i] = std::tanh(p[i]);
  }
}

void add_bias_rows(Matrix& m, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias[c];
  }
}

}  // namespace

Network::Network(std::vector<DenseLayer> layers, Activation activation, double dropout_rate)
    : layers_(std::move(layers)), activation_(activation), dropout_rate_(dropout_rate) {
  if (layers_.empty()) throw std::invalid_argument("Network: needs at least one layer");
  if (dropout_rate_ < 0.0 || dropout_rate_ >= 1.0) {
    throw std::invalid_argument("Network: dropout_rate must be in [0, 1)");
  }
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].weight.cols() != layers_[i + 1].weight.rows()) {
      throw std::invalid_argument("Network: layer " + std::to_string(i) + " output dim " +
                                  std::to_string(layers_[i].weight.cols()) +
                                  " does not chain into layer " + std::to_string(i + 1) +
                                  " input dim " + std::to_string(layers_[i + 1].weight.rows()));
    }
  }
  for (const auto& l : layers_) {
    if (l.bias.size() != l.weight.cols()) {
      throw std::invalid_argument("Network: bias length does not match layer output dim");
    }
  }
}

Network Network::he_initialized(const std::vector<std::size_t>& dims, Activation activation,
                                double dropout_rate, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Network: dims needs input and output");
  std::vector<DenseLayer> layers;
  layers.reserve(dims.size() - 1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer;
    layer.weight = gaussian(rng, dims[i], dims[i + 1]);
    const double scale = std::sqrt(2.0 / static_cast<double>(dims[i]));
    double* p = layer.weight.data();
    for (std::size_t j = 0; j < layer.weight.size(); ++j) p[j] *= scale;
    layer.bias.assign(dims[i + 1], 0.0);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers), activation, dropout_rate);
}

std::size_t Network::input_dim() const { return layers_.front().weight.rows(); }
std::size_t Network::output_dim() const { return layers_.back().weight.cols(); }

ForwardResult Network::forward(const Matrix& batch, Mode mode, Rng* rng) const {
  if (batch.cols() != input_dim()) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " features, network expects " + std::to_string(input_dim()));
  }
  const bool training = mode == Mode::kTrain;
  const bool use_dropout = training && dropout_rate_ > 0.0;
  if (use_dropout && rng == nullptr) {
    throw std::invalid_argument("forward: train mode with dropout needs an Rng");
  }

  ForwardTrace trace;
  trace.training = training;
  trace.layer_inputs.reserve(layers_.size());

  Matrix current = batch;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    trace.layer_inputs.push_back(current);
    Matrix z = matmul(current, layers_[i].weight);
    add_bias_rows(z, layers_[i].bias);
    apply_activation(z, activation_);
    trace.hidden_activations.push_back(z);
    if (use_dropout) {
      const double keep = 1.0 - dropout_rate_;
      Matrix mask(z.rows(), z.cols());
      for (std::size_t j = 0; j < mask.size(); ++j) {
        mask.data()[j] = rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
      for (std::size_t j = 0; j < z.size(); ++j) z.data()[j] *= mask.data()[j];
      trace.dropout_masks.push_back(std::move(mask));
    }
    current = std::move(z);
  }
  trace.layer_inputs.push_back(current);
  Matrix logits = matmul(trace.layer_inputs.back(), layers_.back().weight);
  add_bias_rows(logits, layers_.back().bias);
  return ForwardResult{std::move(logits), std::move(trace)};
}

Gradients Network::zero_gradients() const {
  Gradients g;
  g.weights.reserve(layers_.size());
  g.biases.reserve(layers_.size());
  for (const auto& l : layers_) {
    g.weights.emplace_back(l.weight.rows(), l.weight.cols());
    g.biases.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> Network::flatten_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void Network::unflatten_parameters(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("unflatten_parameters: length mismatch");
  }
  std::size_t pos = 0;
  for (auto& l : layers_) {
    std::copy(flat.begin() + pos, flat.begin() + pos + l.weight.size(), l.weight.data());
    pos += l.weight.size();
    std::copy(flat.begin() + pos, flat.begin() + pos + l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const double* in = logits.row(r);
    double* o = out.row(r);
    double mx = in[0];
    for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (std::size_t c = 0; c < logits.cols(); ++c) o[c] /= sum;
  }
  return out;
}

LossResult nll_loss(const Matrix& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows()) {
    throw std::invalid_argument("nll_loss: one label per logit row required");
  }
  const std::size_t m = logits.rows();
  const std::size_t k = logits.cols();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::invalid_argument("nll_loss: label " + std::to_string(y) +
                                  " out of range [0, " + std::to_string(k) + ")");
    }
  }
  Matrix dlogits = softmax(logits);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = logits.row(r);
    double mx = in[0];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(in[c] - mx);
    // log phi_y = z_y - (mx + log sum)
    loss += (mx + std::log(sum)) - in[labels[r]];
    double* drow = dlogits.row(r);
    drow[labels[r]] -= 1.0;
    for (std::size_t c = 0; c < k; ++c) drow[c] /= static_cast<double>(m);
  }
  return LossResult{loss / static_cast<double>(m), std::move(dlogits)};
}

Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits) {
  const auto& layers = net.layers();
  if (trace.layer_inputs.size() != layers.size() ||
      trace.hidden_activations.size() != layers.size() - 1) {
    throw std::invalid_argument("backward: trace does not match network depth");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (trace.layer_inputs[i].cols() != layers[i].weight.rows()) {
      throw std::invalid_argument("backward: trace layer " + std::to_string(i) +
                                  " width does not match network");
    }
  }
  if (dlogits.rows() != trace.layer_inputs[0].rows() ||
      dlogits.cols() != layers.back().weight.cols()) {
    throw std::invalid_argument("backward: dlogits shape mismatch");
  }
  const bool has_masks = !trace.dropout_masks.empty();

  Gradients grads = net.zero_gradients();
  Matrix delta = dlogits;
  for (std::size_t li = layers.size(); li-- > 0;) {
    grads.weights[li] = matmul_at_b(trace.layer_inputs[li], delta);
    auto& gb = grads.biases[li];
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const double* row = delta.row(r);
      for (std::size_t c = 0; c < delta.cols(); ++c) gb[c] += row[c];
    }
    if (li == 0) break;
    delta = matmul_a_bt(delta, layers[li].weight);
    const Matrix& act = trace.hidden_activations[li - 1];
    if (has_masks) {
      const Matrix& mask = trace.dropout_masks[li - 1];
      for (std::size_t j = 0; j < delta.size(); ++j) delta.data()[j] *= mask.data()[j];
    }
    if (net.activation() == Activation::kRelu) {
      for (std::size_t j = 0; j < delta.size(); ++j) {
        if (act.data()[j] <= 0.0) delta.data()[j] = 0.0;
      }
    } else {
      for (std::size_t j = 0; j < delta.size(); ++j) {
        const double a = act.data()[j];
        delta.data()[j] *= (1.0 - a * a);
      }
    }
  }
  return grads;
}

Matrix predict_mc_dropout(const Network& net, const Matrix& batch, int n_samples, Rng& rng) {
  if (net.dropout_rate() <= 0.0) {
    throw std::invalid_argument("predict_mc_dropout: network has no dropout");
  }
  if (n_samples < 1) throw std::invalid_argument("predict_mc_dropout: n_samples must be >= 1");
  Matrix mean(batch.rows(), net.output_dim());
  for (int s = 0; s < n_samples; ++s) {
    Matrix probs = softmax(net.forward(batch, Mode::kTrain, &rng).logits);
    for (std::size_t j = 0; j < mean.size(); ++j) mean.data()[j] += probs.data()[j];
  }
  for (std::size_t j = 0; j < mean.size(); ++j) mean.data()[j] /= n_samples;
  return mean;
}

const char* activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation: " + name);
}

}  // namespace calibreg
