#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "calibreg/data.hpp"
#include "calibreg/matrix.hpp"
#include "calibreg/metrics.hpp"
#include "calibreg/network.hpp"
#include "calibreg/regularizers.hpp"

namespace calibreg {

struct LrScheduleStep {
  int epoch = 0;        // 0-based epoch from which the factor applies
  double factor = 0.1;  // multiplies the learning rate from that epoch on
};

struct ArchitectureSpec {
  std::vector<std::size_t> hidden_dims = {128, 128};
  Activation activation = Activation::kRelu;
  double dropout = 0.0;
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  std::vector<LrScheduleStep> lr_schedule = {{30, 0.1}, {40, 0.1}};
  int warmup_epochs = 2;  // linear ramp from lr/10
  std::optional<double> clip_norm = 1.0;
  double weight_decay = 0.0;  // decoupled, multiplicative, biases exempt
  RegularizerConfig regularizer;
  std::uint64_t seed = 0;
  ArchitectureSpec architecture;
};

/// One row of the per-epoch diagnostics behind the decay-sweep and
/// norm-stability studies. Train-side quantities are computed on a fixed
/// evaluation subset of at most 2000 training samples; test-side quantities
/// use the full test split.
struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_nll = 0.0;
  double test_nll = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double train_l2_norm = 0.0;
  double test_l2_norm = 0.0;
  double train_max_log_prob = 0.0;
  double test_max_log_prob = 0.0;
  double test_ece = 0.0;
  double test_ecd = 0.0;
  double param_sq_norm = 0.0;  // sum of squared parameters (weights + biases)
};

enum class RunStatus { kOk, kCollapsed, kDiverged };

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  RunStatus status = RunStatus::kOk;
  int diverged_epoch = -1;

  bool collapsed() const { return status == RunStatus::kCollapsed; }
  bool diverged() const { return status == RunStatus::kDiverged; }
};

struct TrainResult {
  Network network;
  TrainHistory history;
};

/// SGD with momentum over NLL + coefficient * penalty. Per-step order:
/// forward, loss and penalty gradients into the logits, backward,
/// global-norm clip, decoupled weight decay, momentum update. The run is a
/// pure function of (config, data); a non-finite loss aborts with the epoch
/// recorded, and a final test ||f||_2 below 1% of its epoch-1 value flags
/// the collapsed (trivial-solution) regime.
TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const Dataset& validation_set, const Dataset& test_set);

/// train() truncated at stop_epoch with the lr-schedule epochs rescaled by
/// stop_epoch / config.epochs. stop_epoch == config.epochs reproduces
/// train() exactly.
TrainResult early_stop_variant(const TrainConfig& config, int stop_epoch,
                               const Dataset& train_set, const Dataset& validation_set,
                               const Dataset& test_set);

/// Independently seeded members (init, shuffling, dropout); n_members >= 2.
std::vector<Network> train_ensemble(const TrainConfig& config, int n_members,
                                    const Dataset& train_set,
                                    const Dataset& validation_set,
                                    const Dataset& test_set);

/// A model under evaluation: a single network, a deep ensemble (mean of
/// member softmax outputs), or an MC-dropout wrapper (mean of train-mode
/// softmax outputs). For aggregated predictors the stored logits are
/// ln(mean probability), so softmax(logits) reproduces the aggregate.
class Predictor {
 public:
  static Predictor single(Network net);
  static Predictor ensemble(std::vector<Network> members);
  static Predictor mc_dropout(Network net, int n_samples, std::uint64_t seed);

  Matrix predict_logits(const Matrix& batch) const;
  std::size_t input_dim() const;

 private:
  std::vector<Network> nets_;
  bool mc_dropout_ = false;
  int mc_samples_ = 0;
  std::uint64_t mc_seed_ = 0;
};

/// Fully populated PredictionLog over the dataset, with optional OOD rows
/// appended (ood=true, no label).
PredictionLog evaluate(const Predictor& model, const Dataset& dataset,
                       const Matrix* ood_inputs = nullptr);

/// Deterministic per-member / per-repeat seed derivation from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

void validate_config(const TrainConfig& config);

}  // namespace calibreg
