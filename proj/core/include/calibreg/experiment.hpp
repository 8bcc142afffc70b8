#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calibreg/calibration.hpp"
#include "calibreg/data.hpp"
#include "calibreg/report.hpp"
#include "calibreg/trainer.hpp"

#include <nlohmann/json.hpp>

namespace calibreg {

struct OodSpec {
  OodMode mode = OodMode::kShiftedMean;
  std::size_t n = 1000;
  std::uint64_t seed = 9000;
};

/// One batch experiment: dataset + split + training recipe + metric options,
/// repeated over deterministically derived seeds. Parsed strictly from JSON
/// (unknown keys are rejected) and fully validated before any work starts.
struct ExperimentConfig {
  DatasetDescriptor dataset;
  SplitSpec split;
  TrainConfig train;
  MetricOptions metrics;
  std::optional<OodSpec> ood;
  int repeats = 1;
  std::string out_dir;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
void validate_experiment_config(const ExperimentConfig& config);

/// Everything produced by one seed run.
struct RunArtifacts {
  std::uint64_t seed = 0;
  RunMetrics metrics;
  TrainHistory history;
  PredictionLog log;
  Network network;
  TemperatureComparison::Entry temperature;
};

struct ExperimentResult {
  ExperimentConfig config;
  CalibrationReport report;
  std::vector<RunArtifacts> runs;
};

/// Seed of repeat i: derive_seed(config.train.seed, i). A sweep row and a
/// standalone run with the same root seed and repeat index are bit-identical.
std::uint64_t repeat_seed(const ExperimentConfig& config, int repeat_index);

/// Trains, evaluates and aggregates config.repeats runs; `jobs` bounds the
/// worker threads (runs are independent, so the result does not depend on
/// the thread count).
ExperimentResult run_experiment(const ExperimentConfig& config, int jobs);

/// Writes config.json, report.json, reliability/entropy tables and per-run
/// model/history/prediction-log files into out_dir.
void write_experiment_outputs(const ExperimentResult& result, const std::string& out_dir);

// ---- sweeps ----

struct SweepParameter {
  std::string path;  // dotted path into the experiment JSON, e.g. "train.weight_decay"
  std::vector<nlohmann::json> values;
};

struct SweepConfig {
  nlohmann::json base;  // experiment config object (out_dir optional)
  std::vector<SweepParameter> parameters;  // exactly one or two
  std::string out_dir;
};

SweepConfig sweep_config_from_json(const nlohmann::json& j);

struct SweepPoint {
  std::vector<nlohmann::json> values;
  ExperimentResult result;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::size_t best_index = 0;  // argmax of mean validation accuracy (first wins)
};

/// Runs every grid point (cartesian product for two parameters). The special
/// parameter path "early_stop" sweeps trainer early stopping: each value is
/// a stop epoch and the lr schedule compresses proportionally.
SweepResult run_sweep(const SweepConfig& config, int jobs);

/// Per-(point, seed) rows; the companion summary CSV holds one row per point
/// with seed-means (best-point selection is the argmax over its
/// validation_accuracy column, first row on ties).
std::string sweep_consolidated_csv(const SweepResult& sweep,
                                   const std::vector<SweepParameter>& parameters);
std::string sweep_summary_csv(const SweepResult& sweep,
                              const std::vector<SweepParameter>& parameters);
void write_sweep_outputs(const SweepResult& sweep, const SweepConfig& config);

// ---- post-hoc calibration ----

struct CalibrateOutcome {
  TemperatureComparison comparison;  // aggregate (mean over directions)
  std::vector<TemperatureFit> fits;  // one (or two in split-half mode)
};

/// Fits tau on one half of the dataset and measures on the other;
/// split_half additionally repeats with the roles reversed and averages.
CalibrateOutcome run_calibrate(const Network& net, const Dataset& dataset,
                               bool split_half, std::uint64_t shuffle_seed,
                               const MetricOptions& options);

}  // namespace calibreg
