#include "calibreg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace calibreg {

namespace {

// Rng fork streams, one per randomness consumer; components can be toggled
// without reshuffling the others.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamShuffle = 2;
constexpr std::uint64_t kStreamDropout = 3;
constexpr std::uint64_t kStreamProjections = 4;
constexpr std::uint64_t kStreamMember = 100;
constexpr std::uint64_t kStreamMcDropout = 7;

constexpr int kHistoryBins = 15;
constexpr std::size_t kTrainEvalCap = 2000;
constexpr double kCollapseFraction = 0.01;

Matrix take_rows(const Matrix& m, std::size_t count) {
  Matrix out(count, m.cols());
  std::copy(m.data(), m.data() + count * m.cols(), out.data());
  return out;
}

double mean_max_log_prob(const Matrix& logits) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const double* z = logits.row(r);
    double mx = z[0];
    for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(z[c] - mx);
    total += -std::log(sum);  // log(max phi) = (z_max - mx) - log sum = -log sum
  }
  return total / static_cast<double>(logits.rows());
}

double accuracy_of(const Matrix& logits, const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const double* z = logits.row(r);
    int best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (z[c] > z[best]) best = static_cast<int>(c);
    }
    correct += best == labels[r];
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  if (config.warmup_epochs > 0 && epoch < config.warmup_epochs) {
    lr *= 0.1 + 0.9 * static_cast<double>(epoch) / config.warmup_epochs;
  }
  for (const auto& step : config.lr_schedule) {
    if (epoch >= step.epoch) lr *= step.factor;
  }
  return lr;
}

struct Velocity {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return Rng(root).fork(kStreamMember + index).seed();
}

void validate_config(const TrainConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(config.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (config.momentum < 0.0 || config.momentum >= 1.0) {
    throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  }
  if (config.warmup_epochs < 0) {
    throw std::invalid_argument("TrainConfig: warmup_epochs must be >= 0");
  }
  for (std::size_t i = 1; i < config.lr_schedule.size(); ++i) {
    if (config.lr_schedule[i].epoch <= config.lr_schedule[i - 1].epoch) {
      throw std::invalid_argument("TrainConfig: schedule epochs must be strictly increasing");
    }
  }
  if (config.clip_norm && !(*config.clip_norm > 0.0)) {
    throw std::invalid_argument("TrainConfig: clip_norm must be > 0");
  }
  if (config.weight_decay < 0.0) {
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  }
  const auto& reg = config.regularizer;
  if (!(reg.coefficient >= 0.0) || !std::isfinite(reg.coefficient)) {
    throw std::invalid_argument("TrainConfig: regularizer coefficient must be finite and >= 0");
  }
  if ((reg.kind == PenaltyKind::kSw1 || reg.kind == PenaltyKind::kPer) &&
      reg.n_projections < 1) {
    throw std::invalid_argument("TrainConfig: n_projections must be >= 1 for sw1/per");
  }
  if (config.architecture.dropout < 0.0 || config.architecture.dropout >= 1.0) {
    throw std::invalid_argument("TrainConfig: dropout must be in [0, 1)");
  }
}

TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const Dataset& validation_set, const Dataset& test_set) {
  validate_config(config);
  if (train_set.size() == 0 || validation_set.size() == 0 || test_set.size() == 0) {
    throw std::invalid_argument("train: all splits must be nonempty");
  }
  if (train_set.dim() != validation_set.dim() || train_set.dim() != test_set.dim()) {
    throw std::invalid_argument("train: split dimensions disagree");
  }
  const int n_classes = train_set.descriptor.k;
  for (int y : train_set.labels) {
    if (y < 0 || y >= n_classes) throw std::invalid_argument("train: label out of range");
  }

  Rng root(config.seed);
  Rng init_rng = root.fork(kStreamInit);
  Rng shuffle_rng = root.fork(kStreamShuffle);
  Rng dropout_rng = root.fork(kStreamDropout);
  Rng projection_rng = root.fork(kStreamProjections);

  std::vector<std::size_t> dims;
  dims.push_back(train_set.dim());
  for (std::size_t h : config.architecture.hidden_dims) dims.push_back(h);
  dims.push_back(n_classes);
  Network net = Network::he_initialized(dims, config.architecture.activation,
                                        config.architecture.dropout, init_rng);

  Velocity velocity;
  for (const auto& layer : net.layers()) {
    velocity.weights.emplace_back(layer.weight.rows(), layer.weight.cols());
    velocity.biases.emplace_back(layer.bias.size(), 0.0);
  }

  const auto& reg = config.regularizer;
  const bool penalty_active =
      reg.kind != PenaltyKind::kNone && reg.coefficient > 0.0;
  const bool projected_penalty =
      penalty_active && (reg.kind == PenaltyKind::kSw1 || reg.kind == PenaltyKind::kPer);
  Matrix fixed_projections;
  if (projected_penalty && reg.fixed_projections) {
    fixed_projections = Matrix(reg.n_projections, n_classes);
    for (int p = 0; p < reg.n_projections; ++p) {
      const auto theta = sample_unit_sphere(n_classes, projection_rng);
      std::copy(theta.begin(), theta.end(), fixed_projections.row(p));
    }
  }

  const std::size_t n_train = train_set.size();
  const std::size_t n_eval = std::min(kTrainEvalCap, n_train);
  const Matrix train_eval_inputs = take_rows(train_set.inputs, n_eval);
  const std::vector<int> train_eval_labels(train_set.labels.begin(),
                                           train_set.labels.begin() + n_eval);

  TrainHistory history;
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    for (std::size_t i = n_train; i > 1; --i) {
      const std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    bool diverged = false;
    for (std::size_t start = 0; start < n_train && !diverged;
         start += config.batch_size) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, n_train - start);
      Matrix batch(count, train_set.inputs.cols());
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        std::copy(train_set.inputs.row(src),
                  train_set.inputs.row(src) + train_set.inputs.cols(), batch.row(i));
        labels[i] = train_set.labels[src];
      }

      ForwardResult fwd = net.forward(batch, Mode::kTrain, &dropout_rng);
      LossResult loss = nll_loss(fwd.logits, labels);
      double step_objective = loss.loss;
      if (penalty_active) {
        PenaltyValue penalty;
        switch (reg.kind) {
          case PenaltyKind::kL1Norm:
            penalty = lp_penalty(fwd.logits, 1);
            break;
          case PenaltyKind::kL2NormSquared:
            penalty = lp_penalty(fwd.logits, 2);
            break;
          case PenaltyKind::kSw1:
            penalty = reg.fixed_projections
                          ? sw1_penalty(fwd.logits, fixed_projections)
                          : sw1_penalty(fwd.logits, reg.n_projections, projection_rng);
            break;
          case PenaltyKind::kPer:
            penalty = reg.fixed_projections
                          ? per_penalty(fwd.logits, fixed_projections)
                          : per_penalty(fwd.logits, reg.n_projections, projection_rng);
            break;
          case PenaltyKind::kNone:
            break;
        }
        step_objective += reg.coefficient * penalty.value;
        for (std::size_t i = 0; i < loss.dlogits.size(); ++i) {
          loss.dlogits.data()[i] += reg.coefficient * penalty.dlogits.data()[i];
        }
      }
      if (!std::isfinite(step_objective)) {
        history.status = RunStatus::kDiverged;
        history.diverged_epoch = epoch;
        diverged = true;
        break;
      }

      Gradients grads = backward(net, fwd.trace, loss.dlogits);

      if (config.clip_norm) {
        double norm_sq = 0.0;
        for (const auto& g : grads.weights) {
          const double* p = g.data();
          for (std::size_t i = 0; i < g.size(); ++i) norm_sq += p[i] * p[i];
        }
        for (const auto& g : grads.biases) {
          for (double v : g) norm_sq += v * v;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > *config.clip_norm) {
          const double scale = *config.clip_norm / norm;
          for (auto& g : grads.weights) {
            double* p = g.data();
            for (std::size_t i = 0; i < g.size(); ++i) p[i] *= scale;
          }
          for (auto& g : grads.biases) {
            for (double& v : g) v *= scale;
          }
        }
      }

      decoupled_weight_decay_step(net, config.weight_decay, lr);

      auto& layers = net.layers();
      for (std::size_t li = 0; li < layers.size(); ++li) {
        double* v = velocity.weights[li].data();
        const double* g = grads.weights[li].data();
        double* w = layers[li].weight.data();
        for (std::size_t i = 0; i < layers[li].weight.size(); ++i) {
          v[i] = config.momentum * v[i] + g[i];
          w[i] -= lr * v[i];
        }
        auto& vb = velocity.biases[li];
        const auto& gb = grads.biases[li];
        auto& b = layers[li].bias;
        for (std::size_t i = 0; i < b.size(); ++i) {
          vb[i] = config.momentum * vb[i] + gb[i];
          b[i] -= lr * vb[i];
        }
      }
    }
    if (history.status == RunStatus::kDiverged) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    const Matrix train_logits = net.forward(train_eval_inputs, Mode::kEval).logits;
    const Matrix test_logits = net.forward(test_set.inputs, Mode::kEval).logits;
    rec.train_nll = nll_loss(train_logits, train_eval_labels).loss;
    rec.test_nll = nll_loss(test_logits, test_set.labels).loss;
    rec.train_accuracy = accuracy_of(train_logits, train_eval_labels);
    rec.test_accuracy = accuracy_of(test_logits, test_set.labels);
    rec.train_l2_norm = function_lp_norm(train_logits, 2);
    rec.test_l2_norm = function_lp_norm(test_logits, 2);
    rec.train_max_log_prob = mean_max_log_prob(train_logits);
    rec.test_max_log_prob = mean_max_log_prob(test_logits);
    const PredictionLog test_log = log_from_logits(test_logits, test_set.labels);
    rec.test_ece = ece(test_log, kHistoryBins);
    rec.test_ecd = ecd(test_log, kHistoryBins);
    double sq = 0.0;
    for (const auto& layer : net.layers()) {
      const double* w = layer.weight.data();
      for (std::size_t i = 0; i < layer.weight.size(); ++i) sq += w[i] * w[i];
      for (double b : layer.bias) sq += b * b;
    }
    rec.param_sq_norm = sq;
    history.epochs.push_back(rec);
  }

  if (history.status == RunStatus::kOk && !history.epochs.empty()) {
    const double first = history.epochs.front().test_l2_norm;
    const double last = history.epochs.back().test_l2_norm;
    if (last < kCollapseFraction * first) history.status = RunStatus::kCollapsed;
  }
  return TrainResult{std::move(net), std::move(history)};
}

TrainResult early_stop_variant(const TrainConfig& config, int stop_epoch,
                               const Dataset& train_set, const Dataset& validation_set,
                               const Dataset& test_set) {
  if (stop_epoch < 1 || stop_epoch > config.epochs) {
    throw std::invalid_argument("early_stop_variant: stop_epoch must be in [1, epochs]");
  }
  TrainConfig truncated = config;
  truncated.epochs = stop_epoch;
  const double ratio = static_cast<double>(stop_epoch) / config.epochs;
  for (auto& step : truncated.lr_schedule) {
    step.epoch = static_cast<int>(std::llround(step.epoch * ratio));
  }
  // Proportional compression can collide schedule epochs; drop duplicates,
  // keeping the later factor applied at the same epoch.
  std::vector<LrScheduleStep> merged;
  for (const auto& step : truncated.lr_schedule) {
    if (!merged.empty() && merged.back().epoch == step.epoch) {
      merged.back().factor *= step.factor;
    } else {
      merged.push_back(step);
    }
  }
  truncated.lr_schedule = std::move(merged);
  return train(truncated, train_set, validation_set, test_set);
}

std::vector<Network> train_ensemble(const TrainConfig& config, int n_members,
                                    const Dataset& train_set,
                                    const Dataset& validation_set,
                                    const Dataset& test_set) {
  if (n_members < 2) {
    throw std::invalid_argument("train_ensemble: n_members must be >= 2");
  }
  std::vector<Network> members;
  members.reserve(n_members);
  for (int i = 0; i < n_members; ++i) {
    TrainConfig member_config = config;
    member_config.seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
    members.push_back(train(member_config, train_set, validation_set, test_set).network);
  }
  return members;
}

Predictor Predictor::single(Network net) {
  Predictor p;
  p.nets_.push_back(std::move(net));
  return p;
}

Predictor Predictor::ensemble(std::vector<Network> members) {
  if (members.size() < 2) {
    throw std::invalid_argument("Predictor::ensemble: needs >= 2 members");
  }
  Predictor p;
  p.nets_ = std::move(members);
  return p;
}

Predictor Predictor::mc_dropout(Network net, int n_samples, std::uint64_t seed) {
  if (net.dropout_rate() <= 0.0) {
    throw std::invalid_argument("Predictor::mc_dropout: network has no dropout");
  }
  if (n_samples < 1) {
    throw std::invalid_argument("Predictor::mc_dropout: n_samples must be >= 1");
  }
  Predictor p;
  p.nets_.push_back(std::move(net));
  p.mc_dropout_ = true;
  p.mc_samples_ = n_samples;
  p.mc_seed_ = seed;
  return p;
}

std::size_t Predictor::input_dim() const { return nets_.front().input_dim(); }

Matrix Predictor::predict_logits(const Matrix& batch) const {
  if (!mc_dropout_ && nets_.size() == 1) {
    return nets_.front().forward(batch, Mode::kEval).logits;
  }
  Matrix mean_probs(batch.rows(), nets_.front().output_dim());
  if (mc_dropout_) {
    Rng rng = Rng(mc_seed_).fork(kStreamMcDropout);
    mean_probs = predict_mc_dropout(nets_.front(), batch, mc_samples_, rng);
  } else {
    for (const auto& net : nets_) {
      const Matrix probs = softmax(net.forward(batch, Mode::kEval).logits);
      for (std::size_t i = 0; i < mean_probs.size(); ++i) {
        mean_probs.data()[i] += probs.data()[i];
      }
    }
    for (std::size_t i = 0; i < mean_probs.size(); ++i) {
      mean_probs.data()[i] /= static_cast<double>(nets_.size());
    }
  }
  // ln(mean prob) keeps softmax(logits) == aggregated probabilities.
  Matrix logits(mean_probs.rows(), mean_probs.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits.data()[i] = std::log(std::max(mean_probs.data()[i], 1e-300));
  }
  return logits;
}

PredictionLog evaluate(const Predictor& model, const Dataset& dataset,
                       const Matrix* ood_inputs) {
  if (dataset.inputs.cols() != model.input_dim()) {
    throw std::invalid_argument("evaluate: dataset dimension " +
                                std::to_string(dataset.inputs.cols()) +
                                " does not match model input " +
                                std::to_string(model.input_dim()));
  }
  PredictionLog log = log_from_logits(model.predict_logits(dataset.inputs), dataset.labels);
  if (ood_inputs != nullptr && ood_inputs->rows() > 0) {
    if (ood_inputs->cols() != model.input_dim()) {
      throw std::invalid_argument("evaluate: OOD dimension mismatch");
    }
    append_ood_rows(log, model.predict_logits(*ood_inputs));
  }
  return log;
}

}  // namespace calibreg
