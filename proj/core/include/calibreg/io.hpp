#pragma once

#include <string>

#include "calibreg/data.hpp"
#include "calibreg/metrics.hpp"
#include "calibreg/network.hpp"
#include "calibreg/trainer.hpp"

#include <nlohmann/json.hpp>

namespace calibreg {

/// Shortest exact decimal form of a double ("%.17g"); every writer funnels
/// numbers through this so outputs are byte-stable and round-trip exactly.
std::string format_double(double v);

// ---- dataset files: CSV with a JSON descriptor header comment ----
// # {"schema":"calibreg.dataset.v1",...descriptor...}
// x0,...,x{d-1},label
void write_dataset_csv(const std::string& path, const Dataset& dataset);
Dataset read_dataset_csv(const std::string& path);

nlohmann::json descriptor_to_json(const DatasetDescriptor& descriptor);
DatasetDescriptor descriptor_from_json(const nlohmann::json& j);

// ---- prediction logs: CSV and JSON, both schema-versioned ----
// CSV columns: logit0..logit{K-1},label,ood  (label empty when absent)
void write_prediction_log_csv(const std::string& path, const PredictionLog& log);
PredictionLog read_prediction_log_csv(const std::string& path);

nlohmann::json prediction_log_to_json(const PredictionLog& log);
PredictionLog prediction_log_from_json(const nlohmann::json& j);
void write_prediction_log_json(const std::string& path, const PredictionLog& log);
PredictionLog read_prediction_log_json(const std::string& path);

// ---- training history ----
void write_history_csv(const std::string& path, const TrainHistory& history);
nlohmann::json history_to_json(const TrainHistory& history);

// ---- network parameter files (versioned text format) ----
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

}  // namespace calibreg
