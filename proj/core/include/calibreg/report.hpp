#pragma once

#include <optional>
#include <string>
#include <vector>

#include "calibreg/calibration.hpp"
#include "calibreg/metrics.hpp"
#include "calibreg/trainer.hpp"

#include <nlohmann/json.hpp>

namespace calibreg {

struct MetricOptions {
  int bins = 15;
  double nbaucc_tau = 0.5;
  int nbaucc_steps = 50;
};

/// Scalar metrics of one evaluated run. Entropy means are split by sample
/// group (in-distribution correct / misclassified / OOD); detection scores
/// treat correct (resp. in-distribution) as the positive class.
struct RunMetrics {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double validation_accuracy = 0.0;
  double nll_value = 0.0;
  double ece_value = 0.0;
  double ecd_value = 0.0;
  double l1_norm = 0.0;
  double l2_norm = 0.0;
  double mean_max_log_prob = 0.0;
  double mean_entropy_correct = 0.0;
  double mean_entropy_misclassified = 0.0;
  double mean_entropy_ood = 0.0;  // 0 when the log has no OOD rows
  double nbaucc_misclassification = 0.0;
  double nbaucc_ood = 0.0;  // 0 when the log has no OOD rows
  bool collapsed = false;
  bool diverged = false;
};

struct ReliabilityRow {
  double midpoint = 0.0;
  double accuracy = 0.0;
  double confidence = 0.0;
  std::size_t count = 0;
};

/// Histogram of predictive entropy over [0, ln K], densities normalized to
/// integrate to 1 per nonempty sample group.
struct EntropyHistogram {
  std::vector<double> edges;  // n_bins + 1 edges
  std::vector<double> density_correct;
  std::vector<double> density_misclassified;
  std::vector<double> density_ood;
  std::size_t count_correct = 0;
  std::size_t count_misclassified = 0;
  std::size_t count_ood = 0;
};

struct TemperatureComparison {
  // Aggregate (mean over runs) plus the raw per-run values.
  double tau = 1.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  bool flat_objective = false;

  struct Entry {
    std::uint64_t seed = 0;
    double tau = 1.0;
    double nll_before = 0.0;
    double nll_after = 0.0;
    double ece_before = 0.0;
    double ece_after = 0.0;
    double accuracy_before = 0.0;
    double accuracy_after = 0.0;
    bool flat_objective = false;
  };
  std::vector<Entry> per_run;
};

/// Aggregated experiment output: per-seed runs, their mean, and the pooled
/// reliability / entropy tables (pooled over repeats).
struct CalibrationReport {
  std::string tag = "vanilla";  // regularizer kind, "vanilla" for none
  int n_classes = 0;
  MetricOptions options;
  std::vector<RunMetrics> runs;
  RunMetrics mean;
  std::vector<ReliabilityRow> reliability;
  EntropyHistogram entropy_histogram;
  std::optional<TemperatureComparison> temperature_scaling;
};

/// Metrics of one PredictionLog; misclassification detection uses the
/// labeled rows, OOD detection uses all rows (positive = in-distribution).
RunMetrics compute_run_metrics(const PredictionLog& log, const MetricOptions& options);

std::vector<ReliabilityRow> reliability_table(const PredictionLog& log, int bins);
EntropyHistogram entropy_histogram_table(const PredictionLog& log, int bins);

/// Arithmetic mean of every scalar across runs (flags are OR-ed).
RunMetrics mean_metrics(const std::vector<RunMetrics>& runs);

nlohmann::json report_to_json(const CalibrationReport& report);
std::string reliability_csv(const std::vector<ReliabilityRow>& rows);
std::string entropy_histogram_csv(const EntropyHistogram& histogram);

}  // namespace calibreg
