// calibreg: synthetic-data calibration experiments from the command line.
//
// Subcommands: gen-data, train, sweep, calibrate, report. Every command is a
// pure function of its inputs and seeds: rerunning with the same arguments
// produces byte-identical output files. Exit codes: 0 success, 1 runtime
// error, 2 validation failure, 3 diverged run, 4 collapsed (trivial
// solution) run.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "calibreg/experiment.hpp"
#include "calibreg/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitCollapsed = 4;

namespace fs = std::filesystem;
using calibreg::format_double;

// CALIBREG_OUT overrides --out for all commands.
std::string effective_out(const std::string& cli_out) {
  if (const char* env = std::getenv("CALIBREG_OUT")) return env;
  return cli_out;
}

struct MetricOverrides {
  std::optional<int> bins;
  std::optional<double> nbaucc_tau;
  std::optional<int> nbaucc_steps;

  void apply(calibreg::MetricOptions& options) const {
    if (bins) options.bins = *bins;
    if (nbaucc_tau) options.nbaucc_tau = *nbaucc_tau;
    if (nbaucc_steps) options.nbaucc_steps = *nbaucc_steps;
  }
};

void add_metric_flags(CLI::App* cmd, MetricOverrides& overrides) {
  cmd->add_option("--bins", overrides.bins, "Confidence bins for ECE/ECD");
  cmd->add_option("--nbaucc-tau", overrides.nbaucc_tau, "NBAUCC threshold upper bound");
  cmd->add_option("--nbaucc-steps", overrides.nbaucc_steps, "NBAUCC grid steps");
}

int cmd_gen_data(const std::string& kind, int k, std::size_t n, int d, double spread,
                 double noise, std::uint64_t seed, const std::string& out_dir) {
  calibreg::Dataset dataset;
  if (kind == "blobs") {
    dataset = calibreg::make_blobs(k, n, d, spread, seed);
  } else if (kind == "two_moons") {
    dataset = calibreg::make_two_moons(n, noise, seed);
  } else {
    std::cerr << "error: unknown dataset kind '" << kind << "'\n";
    return kExitValidation;
  }
  fs::create_directories(out_dir);
  std::ostringstream name;
  name << kind << "_k" << dataset.descriptor.k << "_n" << dataset.descriptor.n << "_d"
       << dataset.descriptor.d << "_seed" << dataset.descriptor.seed << ".csv";
  const fs::path path = fs::path(out_dir) / name.str();
  calibreg::write_dataset_csv(path.string(), dataset);
  std::cout << "wrote " << path.string() << " (" << dataset.size() << " rows)\n";
  return kExitOk;
}

int run_status_code(const calibreg::ExperimentResult& result) {
  bool collapsed = false;
  for (const auto& run : result.runs) {
    if (run.history.diverged()) return kExitDiverged;
    collapsed = collapsed || run.history.collapsed();
  }
  return collapsed ? kExitCollapsed : kExitOk;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir, int jobs, const MetricOverrides& overrides) {
  nlohmann::json config_json = calibreg::read_json_file(config_path);
  calibreg::ExperimentConfig config = calibreg::experiment_config_from_json(config_json);
  if (seed) config.train.seed = *seed;
  overrides.apply(config.metrics);
  std::string out = effective_out(out_dir);
  if (out.empty()) out = config.out_dir;
  if (out.empty()) {
    std::cerr << "error: no output directory (use --out, CALIBREG_OUT, or out_dir)\n";
    return kExitValidation;
  }

  const calibreg::ExperimentResult result = calibreg::run_experiment(config, jobs);
  calibreg::write_experiment_outputs(result, out);

  const auto& mean = result.report.mean;
  std::cout << "tag=" << result.report.tag << " runs=" << result.runs.size()
            << " acc=" << format_double(mean.accuracy)
            << " nll=" << format_double(mean.nll_value)
            << " ece=" << format_double(mean.ece_value)
            << " l2_norm=" << format_double(mean.l2_norm) << "\n";
  const int status = run_status_code(result);
  if (status == kExitDiverged) std::cout << "status=diverged\n";
  if (status == kExitCollapsed) std::cout << "status=collapsed (trivial solution)\n";
  return status;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, int jobs) {
  nlohmann::json config_json = calibreg::read_json_file(config_path);
  calibreg::SweepConfig config = calibreg::sweep_config_from_json(config_json);
  const std::string out = effective_out(out_dir);
  if (!out.empty()) config.out_dir = out;
  if (config.out_dir.empty()) {
    std::cerr << "error: no output directory (use --out, CALIBREG_OUT, or out_dir)\n";
    return kExitValidation;
  }

  const calibreg::SweepResult sweep = calibreg::run_sweep(config, jobs);
  calibreg::write_sweep_outputs(sweep, config);

  std::cout << "points=" << sweep.points.size() << " best_index=" << sweep.best_index
            << " best_values=";
  for (const auto& v : sweep.points[sweep.best_index].values) std::cout << v.dump() << " ";
  std::cout << "\n";
  return kExitOk;
}

int cmd_calibrate(const std::string& model_path, const std::string& data_path,
                  bool split_half, std::uint64_t seed, const std::string& out_dir,
                  const MetricOverrides& overrides) {
  const calibreg::Network net = calibreg::load_network(model_path);
  const calibreg::Dataset dataset = calibreg::read_dataset_csv(data_path);
  calibreg::MetricOptions options;
  overrides.apply(options);
  const std::string out = effective_out(out_dir);
  if (out.empty()) {
    std::cerr << "error: no output directory (use --out or CALIBREG_OUT)\n";
    return kExitValidation;
  }

  const calibreg::CalibrateOutcome outcome =
      calibreg::run_calibrate(net, dataset, split_half, seed, options);

  fs::create_directories(out);
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& fit : outcome.fits) {
    fits.push_back(nlohmann::json{{"tau", fit.tau},
                                  {"holdout_nll_before", fit.holdout_nll_before},
                                  {"holdout_nll_after", fit.holdout_nll_after},
                                  {"flat_objective", fit.flat_objective},
                                  {"bracket_warning", fit.bracket_warning},
                                  {"trace_taus", fit.trace_taus},
                                  {"trace_nlls", fit.trace_nlls}});
  }
  nlohmann::json directions = nlohmann::json::array();
  for (const auto& e : outcome.comparison.per_run) {
    directions.push_back(nlohmann::json{{"tau", e.tau},
                                        {"nll_before", e.nll_before},
                                        {"nll_after", e.nll_after},
                                        {"ece_before", e.ece_before},
                                        {"ece_after", e.ece_after},
                                        {"accuracy_before", e.accuracy_before},
                                        {"accuracy_after", e.accuracy_after}});
  }
  const auto& c = outcome.comparison;
  nlohmann::json j{{"schema", "calibreg.calibrate.v1"},
                   {"split_half", split_half},
                   {"shuffle_seed", seed},
                   {"tau", c.tau},
                   {"nll_before", c.nll_before},
                   {"nll_after", c.nll_after},
                   {"ece_before", c.ece_before},
                   {"ece_after", c.ece_after},
                   {"accuracy_before", c.accuracy_before},
                   {"accuracy_after", c.accuracy_after},
                   {"fits", std::move(fits)},
                   {"directions", std::move(directions)}};
  const fs::path path = fs::path(out) / "calibrate.json";
  calibreg::write_json_file(path.string(), j);
  std::cout << "tau=" << format_double(c.tau) << " ece " << format_double(c.ece_before)
            << " -> " << format_double(c.ece_after) << " nll "
            << format_double(c.nll_before) << " -> " << format_double(c.nll_after) << "\n";
  return kExitOk;
}

int cmd_report(const std::string& log_path, const std::string& out_dir,
               const MetricOverrides& overrides) {
  calibreg::PredictionLog log;
  if (log_path.size() > 5 && log_path.substr(log_path.size() - 5) == ".json") {
    log = calibreg::read_prediction_log_json(log_path);
  } else {
    log = calibreg::read_prediction_log_csv(log_path);
  }
  calibreg::MetricOptions options;
  overrides.apply(options);
  const std::string out = effective_out(out_dir);
  if (out.empty()) {
    std::cerr << "error: no output directory (use --out or CALIBREG_OUT)\n";
    return kExitValidation;
  }
  fs::create_directories(out);

  const auto reliability = calibreg::reliability_table(log, options.bins);
  const auto histogram = calibreg::entropy_histogram_table(log, options.bins);
  calibreg::write_text_file((fs::path(out) / "reliability.csv").string(),
                            calibreg::reliability_csv(reliability));
  calibreg::write_text_file((fs::path(out) / "entropy_histogram.csv").string(),
                            calibreg::entropy_histogram_csv(histogram));
  std::cout << "wrote reliability.csv and entropy_histogram.csv to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibreg: explicit-regularization calibration experiments"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset CSV");
  std::string gen_kind;
  int gen_k = 10, gen_d = 16;
  std::size_t gen_n = 10000;
  double gen_spread = 0.22, gen_noise = 0.1;
  std::uint64_t gen_seed = 0;
  std::string gen_out = ".";
  gen->add_option("kind", gen_kind, "blobs or two_moons")->required();
  gen->add_option("--k", gen_k, "Class count (blobs)");
  gen->add_option("--n", gen_n, "Sample count");
  gen->add_option("--d", gen_d, "Input dimension (blobs)");
  gen->add_option("--spread", gen_spread, "Per-class Gaussian std (blobs)");
  gen->add_option("--noise", gen_noise, "Jitter std (two_moons)");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "Run a training experiment from a config");
  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  int train_jobs = 1;
  MetricOverrides train_overrides;
  train_cmd->add_option("--config", train_config, "Experiment config JSON")->required();
  train_cmd->add_option("--seed", train_seed, "Override the root seed");
  train_cmd->add_option("--out", train_out, "Output directory");
  train_cmd->add_option("--jobs", train_jobs, "Parallel seed repeats");
  add_metric_flags(train_cmd, train_overrides);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a one- or two-parameter grid sweep");
  std::string sweep_config, sweep_out;
  int sweep_jobs = 1;
  sweep_cmd->add_option("--config", sweep_config, "Sweep config JSON")->required();
  sweep_cmd->add_option("--out", sweep_out, "Output directory");
  sweep_cmd->add_option("--jobs", sweep_jobs, "Parallel runs per grid point");

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit and evaluate temperature scaling");
  std::string cal_model, cal_data, cal_out;
  bool cal_split_half = false;
  std::uint64_t cal_seed = 0;
  MetricOverrides cal_overrides;
  cal_cmd->add_option("--model", cal_model, "Network parameter file")->required();
  cal_cmd->add_option("--data", cal_data, "Dataset CSV")->required();
  cal_cmd->add_flag("--split-half", cal_split_half,
                    "Fit/evaluate both half-splits and average");
  cal_cmd->add_option("--seed", cal_seed, "Half-split shuffle seed");
  cal_cmd->add_option("--out", cal_out, "Output directory");
  add_metric_flags(cal_cmd, cal_overrides);

  // report
  auto* report_cmd =
      app.add_subcommand("report", "Emit reliability and entropy tables from a log");
  std::string report_log, report_out;
  MetricOverrides report_overrides;
  report_cmd->add_option("--log", report_log, "PredictionLog CSV or JSON")->required();
  report_cmd->add_option("--out", report_out, "Output directory");
  add_metric_flags(report_cmd, report_overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_kind, gen_k, gen_n, gen_d, gen_spread, gen_noise, gen_seed,
                          effective_out(gen_out));
    }
    if (train_cmd->parsed()) {
      return cmd_train(train_config, train_seed, train_out, train_jobs, train_overrides);
    }
    if (sweep_cmd->parsed()) {
      return cmd_sweep(sweep_config, sweep_out, sweep_jobs);
    }
    if (cal_cmd->parsed()) {
      return cmd_calibrate(cal_model, cal_data, cal_split_half, cal_seed, cal_out,
                           cal_overrides);
    }
    if (report_cmd->parsed()) {
      return cmd_report(report_log, report_out, report_overrides);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
