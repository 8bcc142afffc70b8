#include "calibreg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "calibreg/io.hpp"

namespace calibreg {

namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& context) {
  if (!j.is_object()) throw std::invalid_argument(context + ": expected an object");
  for (const auto& item : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return item.key() == k;
        }) == allowed.end()) {
      throw std::invalid_argument(context + ": unknown key '" + item.key() + "'");
    }
  }
}

template <typename T>
T value_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

Dataset make_dataset(const DatasetDescriptor& d) {
  if (d.kind == DatasetKind::kBlobs) {
    return make_blobs(d.k, d.n, d.d, d.spread, d.seed);
  }
  return make_two_moons(d.n, d.noise, d.seed);
}

void run_parallel(int jobs, int n_tasks, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n_tasks));
  if (jobs == 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(jobs);
  for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

double label_accuracy(const Matrix& logits, const std::vector<int>& labels) {
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

RunArtifacts execute_run(const ExperimentConfig& config, const SplitResult& splits,
                         const Matrix* ood_inputs, std::uint64_t seed) {
  RunArtifacts out;
  out.seed = seed;
  TrainConfig tc = config.train;
  tc.seed = seed;
  TrainResult trained = train(tc, splits.train, splits.validation, splits.test);
  out.history = std::move(trained.history);
  out.network = std::move(trained.network);

  if (out.history.diverged()) {
    // No finite predictions to score; the flags carry the outcome.
    out.metrics.seed = seed;
    out.metrics.diverged = true;
    out.log.n_classes = config.dataset.k;
    return out;
  }

  const Predictor predictor = Predictor::single(out.network);
  const Matrix test_logits = predictor.predict_logits(splits.test.inputs);
  out.log = log_from_logits(test_logits, splits.test.labels);
  if (ood_inputs != nullptr) {
    append_ood_rows(out.log, predictor.predict_logits(*ood_inputs));
  }
  out.metrics = compute_run_metrics(out.log, config.metrics);
  out.metrics.seed = seed;
  out.metrics.collapsed = out.history.collapsed();

  const Matrix val_logits = predictor.predict_logits(splits.validation.inputs);
  out.metrics.validation_accuracy = label_accuracy(val_logits, splits.validation.labels);

  // Post-hoc temperature-scaling comparison: fit on validation, score on test.
  const TemperatureFit fit = fit_temperature(val_logits, splits.validation.labels);
  const Matrix scaled = apply_temperature(test_logits, fit.tau);
  const PredictionLog scaled_log = log_from_logits(scaled, splits.test.labels);
  PredictionLog plain_log = log_from_logits(test_logits, splits.test.labels);
  auto& e = out.temperature;
  e.seed = seed;
  e.tau = fit.tau;
  e.flat_objective = fit.flat_objective;
  e.nll_before = nll(plain_log);
  e.nll_after = nll(scaled_log);
  e.ece_before = ece(plain_log, config.metrics.bins);
  e.ece_after = ece(scaled_log, config.metrics.bins);
  e.accuracy_before = label_accuracy(test_logits, splits.test.labels);
  e.accuracy_after = label_accuracy(scaled, splits.test.labels);
  return out;
}

std::string run_prefix(int index) {
  std::ostringstream ss;
  ss << "run" << index;
  return ss.str();
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  require_keys(j, {"schema", "dataset", "split", "train", "metrics", "ood", "repeats",
                   "out_dir"},
               "experiment config");
  if (j.contains("schema") && j.at("schema") != "calibreg.experiment.v1") {
    throw std::invalid_argument("experiment config: unsupported schema");
  }
  ExperimentConfig config;

  const json& ds = j.at("dataset");
  require_keys(ds, {"kind", "k", "n", "d", "spread", "noise", "seed"}, "dataset");
  config.dataset.kind = dataset_kind_from_name(ds.value("kind", "blobs"));
  config.dataset.k = value_or(ds, "k", config.dataset.kind == DatasetKind::kTwoMoons ? 2 : 10);
  config.dataset.n = ds.at("n").get<std::size_t>();
  config.dataset.d = value_or(ds, "d", config.dataset.kind == DatasetKind::kTwoMoons ? 2 : 16);
  config.dataset.spread = value_or(ds, "spread", 0.22);
  config.dataset.noise = value_or(ds, "noise", 0.1);
  config.dataset.seed = value_or<std::uint64_t>(ds, "seed", 0);

  if (j.contains("split")) {
    const json& sp = j.at("split");
    require_keys(sp, {"train", "validation", "test", "shuffle_seed"}, "split");
    config.split.train_fraction = value_or(sp, "train", 0.8);
    config.split.validation_fraction = value_or(sp, "validation", 0.1);
    config.split.test_fraction = value_or(sp, "test", 0.1);
    config.split.shuffle_seed = value_or<std::uint64_t>(sp, "shuffle_seed", 0);
  }

  const json& tr = j.at("train");
  require_keys(tr,
               {"epochs", "batch_size", "lr", "momentum", "lr_schedule", "warmup_epochs",
                "clip_norm", "weight_decay", "regularizer", "seed", "hidden_dims",
                "activation", "dropout"},
               "train");
  config.train.epochs = value_or(tr, "epochs", 50);
  config.train.batch_size = value_or(tr, "batch_size", 128);
  config.train.lr = value_or(tr, "lr", 0.1);
  config.train.momentum = value_or(tr, "momentum", 0.9);
  if (tr.contains("lr_schedule")) {
    config.train.lr_schedule.clear();
    for (const auto& step : tr.at("lr_schedule")) {
      if (!step.is_array() || step.size() != 2) {
        throw std::invalid_argument("train.lr_schedule: expected [epoch, factor] pairs");
      }
      config.train.lr_schedule.push_back(
          LrScheduleStep{step.at(0).get<int>(), step.at(1).get<double>()});
    }
  }
  config.train.warmup_epochs = value_or(tr, "warmup_epochs", 2);
  if (tr.contains("clip_norm")) {
    if (tr.at("clip_norm").is_null()) {
      config.train.clip_norm.reset();
    } else {
      config.train.clip_norm = tr.at("clip_norm").get<double>();
    }
  }
  config.train.weight_decay = value_or(tr, "weight_decay", 0.0);
  if (tr.contains("regularizer")) {
    const json& rg = tr.at("regularizer");
    require_keys(rg, {"kind", "coefficient", "n_projections", "fixed_projections"},
                 "train.regularizer");
    config.train.regularizer.kind = penalty_kind_from_name(rg.value("kind", "none"));
    config.train.regularizer.coefficient = value_or(rg, "coefficient", 0.0);
    config.train.regularizer.n_projections = value_or(rg, "n_projections", 256);
    config.train.regularizer.fixed_projections = value_or(rg, "fixed_projections", false);
  }
  config.train.seed = value_or<std::uint64_t>(tr, "seed", 0);
  if (tr.contains("hidden_dims")) {
    config.train.architecture.hidden_dims =
        tr.at("hidden_dims").get<std::vector<std::size_t>>();
  }
  config.train.architecture.activation =
      activation_from_name(value_or<std::string>(tr, "activation", "relu"));
  config.train.architecture.dropout = value_or(tr, "dropout", 0.0);

  if (j.contains("metrics")) {
    const json& mt = j.at("metrics");
    require_keys(mt, {"bins", "nbaucc_tau", "nbaucc_steps"}, "metrics");
    config.metrics.bins = value_or(mt, "bins", 15);
    config.metrics.nbaucc_tau = value_or(mt, "nbaucc_tau", 0.5);
    config.metrics.nbaucc_steps = value_or(mt, "nbaucc_steps", 50);
  }

  if (j.contains("ood") && !j.at("ood").is_null()) {
    const json& od = j.at("ood");
    require_keys(od, {"mode", "n", "seed"}, "ood");
    OodSpec spec;
    spec.mode = ood_mode_from_name(od.value("mode", "shifted_mean"));
    spec.n = value_or<std::size_t>(od, "n", 1000);
    spec.seed = value_or<std::uint64_t>(od, "seed", 9000);
    config.ood = spec;
  }

  config.repeats = value_or(j, "repeats", 1);
  config.out_dir = value_or<std::string>(j, "out_dir", "");
  validate_experiment_config(config);
  return config;
}

json experiment_config_to_json(const ExperimentConfig& config) {
  json schedule = json::array();
  for (const auto& step : config.train.lr_schedule) {
    schedule.push_back(json::array({step.epoch, step.factor}));
  }
  json j{
      {"schema", "calibreg.experiment.v1"},
      {"dataset",
       {{"kind", dataset_kind_name(config.dataset.kind)},
        {"k", config.dataset.k},
        {"n", config.dataset.n},
        {"d", config.dataset.d},
        {"spread", config.dataset.spread},
        {"noise", config.dataset.noise},
        {"seed", config.dataset.seed}}},
      {"split",
       {{"train", config.split.train_fraction},
        {"validation", config.split.validation_fraction},
        {"test", config.split.test_fraction},
        {"shuffle_seed", config.split.shuffle_seed}}},
      {"train",
       {{"epochs", config.train.epochs},
        {"batch_size", config.train.batch_size},
        {"lr", config.train.lr},
        {"momentum", config.train.momentum},
        {"lr_schedule", std::move(schedule)},
        {"warmup_epochs", config.train.warmup_epochs},
        {"clip_norm",
         config.train.clip_norm ? json(*config.train.clip_norm) : json(nullptr)},
        {"weight_decay", config.train.weight_decay},
        {"regularizer",
         {{"kind", penalty_kind_name(config.train.regularizer.kind)},
          {"coefficient", config.train.regularizer.coefficient},
          {"n_projections", config.train.regularizer.n_projections},
          {"fixed_projections", config.train.regularizer.fixed_projections}}},
        {"seed", config.train.seed},
        {"hidden_dims", config.train.architecture.hidden_dims},
        {"activation", activation_name(config.train.architecture.activation)},
        {"dropout", config.train.architecture.dropout}}},
      {"metrics",
       {{"bins", config.metrics.bins},
        {"nbaucc_tau", config.metrics.nbaucc_tau},
        {"nbaucc_steps", config.metrics.nbaucc_steps}}},
      {"repeats", config.repeats},
      {"out_dir", config.out_dir}};
  if (config.ood) {
    j["ood"] = json{{"mode", ood_mode_name(config.ood->mode)},
                    {"n", config.ood->n},
                    {"seed", config.ood->seed}};
  }
  return j;
}

void validate_experiment_config(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  if (d.kind == DatasetKind::kBlobs) {
    if (d.k < 2) throw std::invalid_argument("dataset: blobs needs k >= 2");
    if (d.d < 2) throw std::invalid_argument("dataset: blobs needs d >= 2");
    if (!(d.spread > 0.0)) throw std::invalid_argument("dataset: spread must be > 0");
  } else {
    if (d.k != 2) throw std::invalid_argument("dataset: two_moons has k = 2");
    if (d.d != 2) throw std::invalid_argument("dataset: two_moons has d = 2");
    if (d.noise < 0.0) throw std::invalid_argument("dataset: noise must be >= 0");
    if (config.ood) {
      throw std::invalid_argument("ood: generators require a blobs dataset");
    }
  }
  if (d.n < 3) throw std::invalid_argument("dataset: n too small to split");
  validate_config(config.train);
  if (config.metrics.bins < 1) throw std::invalid_argument("metrics: bins must be >= 1");
  if (!(config.metrics.nbaucc_tau > 0.0 && config.metrics.nbaucc_tau <= 1.0)) {
    throw std::invalid_argument("metrics: nbaucc_tau must be in (0, 1]");
  }
  if (config.metrics.nbaucc_steps < 1) {
    throw std::invalid_argument("metrics: nbaucc_steps must be >= 1");
  }
  if (config.ood && config.ood->n < 1) {
    throw std::invalid_argument("ood: n must be >= 1");
  }
  if (config.repeats < 1) throw std::invalid_argument("repeats must be >= 1");
}

std::uint64_t repeat_seed(const ExperimentConfig& config, int repeat_index) {
  return derive_seed(config.train.seed, static_cast<std::uint64_t>(repeat_index));
}

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs) {
  validate_experiment_config(config);
  const Dataset full = make_dataset(config.dataset);
  const SplitResult splits = split(full, config.split);
  std::optional<Matrix> ood_inputs;
  if (config.ood) {
    ood_inputs = make_ood(config.dataset, config.ood->n, config.ood->mode, config.ood->seed);
  }

  ExperimentResult result;
  result.config = config;
  result.runs.resize(config.repeats);
  run_parallel(jobs, config.repeats, [&](int i) {
    result.runs[i] = execute_run(config, splits, ood_inputs ? &*ood_inputs : nullptr,
                                 repeat_seed(config, i));
  });

  CalibrationReport& report = result.report;
  report.tag = config.train.regularizer.kind == PenaltyKind::kNone
                   ? "vanilla"
                   : penalty_kind_name(config.train.regularizer.kind);
  report.n_classes = config.dataset.k;
  report.options = config.metrics;
  for (const auto& run : result.runs) report.runs.push_back(run.metrics);
  report.mean = mean_metrics(report.runs);

  PredictionLog pooled;
  pooled.n_classes = config.dataset.k;
  TemperatureComparison ts;
  int ts_count = 0;
  for (const auto& run : result.runs) {
    if (run.history.diverged()) continue;
    pooled.records.insert(pooled.records.end(), run.log.records.begin(),
                          run.log.records.end());
    ts.per_run.push_back(run.temperature);
    const auto& e = run.temperature;
    ts.tau += e.tau;
    ts.nll_before += e.nll_before;
    ts.nll_after += e.nll_after;
    ts.ece_before += e.ece_before;
    ts.ece_after += e.ece_after;
    ts.accuracy_before += e.accuracy_before;
    ts.accuracy_after += e.accuracy_after;
    ts.flat_objective = ts.flat_objective || e.flat_objective;
    ++ts_count;
  }
  if (!pooled.records.empty()) {
    report.reliability = reliability_table(pooled, config.metrics.bins);
    report.entropy_histogram = entropy_histogram_table(pooled, config.metrics.bins);
  }
  if (ts_count > 0) {
    ts.tau /= ts_count;
    ts.nll_before /= ts_count;
    ts.nll_after /= ts_count;
    ts.ece_before /= ts_count;
    ts.ece_after /= ts_count;
    ts.accuracy_before /= ts_count;
    ts.accuracy_after /= ts_count;
    report.temperature_scaling = std::move(ts);
  }
  return result;
}

void write_experiment_outputs(const ExperimentResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  ExperimentConfig config_copy = result.config;
  config_copy.out_dir = out_dir;
  write_json_file((dir / "config.json").string(), experiment_config_to_json(config_copy));
  write_json_file((dir / "report.json").string(), report_to_json(result.report));
  write_text_file((dir / "reliability.csv").string(),
                  reliability_csv(result.report.reliability));
  write_text_file((dir / "entropy_histogram.csv").string(),
                  entropy_histogram_csv(result.report.entropy_histogram));
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const auto& run = result.runs[i];
    const std::string prefix = run_prefix(static_cast<int>(i));
    save_network((dir / (prefix + "_model.txt")).string(), run.network);
    write_history_csv((dir / (prefix + "_history.csv")).string(), run.history);
    write_prediction_log_csv((dir / (prefix + "_predictions.csv")).string(), run.log);
  }
}

SweepConfig sweep_config_from_json(const json& j) {
  require_keys(j, {"schema", "base", "grid", "out_dir"}, "sweep config");
  if (j.contains("schema") && j.at("schema") != "calibreg.sweep.v1") {
    throw std::invalid_argument("sweep config: unsupported schema");
  }
  SweepConfig config;
  config.base = j.at("base");
  const json& grid = j.at("grid");
  if (!grid.is_array() || grid.empty() || grid.size() > 2) {
    throw std::invalid_argument("sweep config: grid must name one or two parameters");
  }
  for (const auto& entry : grid) {
    require_keys(entry, {"parameter", "values"}, "sweep grid entry");
    SweepParameter param;
    param.path = entry.at("parameter").get<std::string>();
    for (const auto& v : entry.at("values")) param.values.push_back(v);
    if (param.values.empty()) {
      throw std::invalid_argument("sweep config: empty value list for " + param.path);
    }
    config.parameters.push_back(std::move(param));
  }
  config.out_dir = value_or<std::string>(j, "out_dir", "");
  // Fail fast if the base itself is invalid.
  experiment_config_from_json(config.base);
  return config;
}

namespace {

void patch_path(json& config, const std::string& path, const json& value) {
  if (path == "early_stop") {
    // Early-stopping ablation: truncate at the stop epoch and compress the
    // schedule proportionally.
    const int stop = value.get<int>();
    json& train = config.at("train");
    const int total = train.value("epochs", 50);
    if (stop < 1 || stop > total) {
      throw std::invalid_argument("sweep: early_stop value out of [1, epochs]");
    }
    const double ratio = static_cast<double>(stop) / total;
    if (train.contains("lr_schedule")) {
      for (auto& step : train.at("lr_schedule")) {
        step[0] = static_cast<int>(std::llround(step.at(0).get<int>() * ratio));
      }
    }
    train["epochs"] = stop;
    return;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw std::invalid_argument("sweep: bad parameter path " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &node->at(key);
    start = dot + 1;
  }
}

}  // namespace

SweepResult run_sweep(const SweepConfig& config, int jobs) {
  std::vector<std::vector<json>> combos;
  if (config.parameters.size() == 1) {
    for (const auto& v : config.parameters[0].values) combos.push_back({v});
  } else {
    for (const auto& a : config.parameters[0].values) {
      for (const auto& b : config.parameters[1].values) combos.push_back({a, b});
    }
  }

  SweepResult sweep;
  sweep.points.reserve(combos.size());
  for (const auto& values : combos) {
    json point_json = config.base;
    for (std::size_t p = 0; p < config.parameters.size(); ++p) {
      patch_path(point_json, config.parameters[p].path, values[p]);
    }
    const ExperimentConfig point_config = experiment_config_from_json(point_json);
    SweepPoint point;
    point.values = values;
    point.result = run_experiment(point_config, jobs);
    sweep.points.push_back(std::move(point));
  }

  sweep.best_index = 0;
  for (std::size_t i = 1; i < sweep.points.size(); ++i) {
    if (sweep.points[i].result.report.mean.validation_accuracy >
        sweep.points[sweep.best_index].result.report.mean.validation_accuracy) {
      sweep.best_index = i;
    }
  }
  return sweep;
}

namespace {

std::string csv_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void append_metric_columns(std::ostringstream& out, const RunMetrics& m) {
  out << format_double(m.validation_accuracy) << "," << format_double(m.accuracy) << ","
      << format_double(m.nll_value) << "," << format_double(m.ece_value) << ","
      << format_double(m.ecd_value) << "," << format_double(m.l1_norm) << ","
      << format_double(m.l2_norm) << "," << format_double(m.mean_entropy_correct) << ","
      << format_double(m.mean_entropy_misclassified) << ","
      << format_double(m.mean_entropy_ood) << ","
      << format_double(m.nbaucc_misclassification) << "," << format_double(m.nbaucc_ood)
      << "," << (m.collapsed ? 1 : 0) << "," << (m.diverged ? 1 : 0);
}

constexpr const char* kMetricColumns =
    "validation_accuracy,accuracy,nll,ece,ecd,l1_norm,l2_norm,"
    "mean_entropy_correct,mean_entropy_misclassified,mean_entropy_ood,"
    "nbaucc_misclassification,nbaucc_ood,collapsed,diverged";

}  // namespace

std::string sweep_consolidated_csv(const SweepResult& sweep,
                                   const std::vector<SweepParameter>& parameters) {
  std::ostringstream out;
  out << "# {\"schema\":\"calibreg.sweep_consolidated.v1\"}\n";
  for (const auto& p : parameters) out << p.path << ",";
  out << "run_index,seed," << kMetricColumns << "\n";
  for (const auto& point : sweep.points) {
    for (std::size_t r = 0; r < point.result.runs.size(); ++r) {
      for (const auto& v : point.values) out << csv_value(v) << ",";
      out << r << "," << point.result.runs[r].seed << ",";
      append_metric_columns(out, point.result.runs[r].metrics);
      out << "\n";
    }
  }
  return out.str();
}

std::string sweep_summary_csv(const SweepResult& sweep,
                              const std::vector<SweepParameter>& parameters) {
  std::ostringstream out;
  out << "# {\"schema\":\"calibreg.sweep_summary.v1\"}\n";
  for (const auto& p : parameters) out << p.path << ",";
  out << kMetricColumns << "\n";
  for (const auto& point : sweep.points) {
    for (const auto& v : point.values) out << csv_value(v) << ",";
    append_metric_columns(out, point.result.report.mean);
    out << "\n";
  }
  return out.str();
}

void write_sweep_outputs(const SweepResult& sweep, const SweepConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  const fs::path dir(config.out_dir);

  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    std::ostringstream name;
    name << "point_" << (i < 100 ? (i < 10 ? "00" : "0") : "") << i;
    write_experiment_outputs(sweep.points[i].result, (dir / name.str()).string());
  }
  write_text_file((dir / "consolidated.csv").string(),
                  sweep_consolidated_csv(sweep, config.parameters));
  write_text_file((dir / "summary.csv").string(),
                  sweep_summary_csv(sweep, config.parameters));

  json points = json::array();
  for (const auto& point : sweep.points) {
    points.push_back(json{{"values", point.values},
                          {"validation_accuracy",
                           point.result.report.mean.validation_accuracy},
                          {"tag", point.result.report.tag}});
  }
  json summary{{"schema", "calibreg.sweep.v1"},
               {"selection", "max mean validation_accuracy, first on ties"},
               {"best_index", sweep.best_index},
               {"best_values", sweep.points[sweep.best_index].values},
               {"points", std::move(points)}};
  write_json_file((dir / "sweep_summary.json").string(), summary);
}

CalibrateOutcome run_calibrate(const Network& net, const Dataset& dataset, bool split_half,
                               std::uint64_t shuffle_seed, const MetricOptions& options) {
  if (dataset.size() < 4) {
    throw std::invalid_argument("run_calibrate: dataset too small to halve");
  }
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(shuffle_seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t half = dataset.size() / 2;

  const Predictor predictor = Predictor::single(net);
  const Matrix all_logits = predictor.predict_logits(dataset.inputs);

  auto slice = [&](std::size_t begin, std::size_t end, Matrix& logits,
                   std::vector<int>& labels) {
    logits = Matrix(end - begin, all_logits.cols());
    labels.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      std::copy(all_logits.row(order[i]), all_logits.row(order[i]) + all_logits.cols(),
                logits.row(i - begin));
      labels[i - begin] = dataset.labels[order[i]];
    }
  };
  Matrix logits_a, logits_b;
  std::vector<int> labels_a, labels_b;
  slice(0, half, logits_a, labels_a);
  slice(half, dataset.size(), logits_b, labels_b);

  CalibrateOutcome outcome;
  auto one_direction = [&](const Matrix& fit_logits, const std::vector<int>& fit_labels,
                           const Matrix& eval_logits, const std::vector<int>& eval_labels) {
    const TemperatureFit fit = fit_temperature(fit_logits, fit_labels);
    const PredictionLog before = log_from_logits(eval_logits, eval_labels);
    const PredictionLog after =
        log_from_logits(apply_temperature(eval_logits, fit.tau), eval_labels);
    TemperatureComparison::Entry e;
    e.tau = fit.tau;
    e.flat_objective = fit.flat_objective;
    e.nll_before = nll(before);
    e.nll_after = nll(after);
    e.ece_before = ece(before, options.bins);
    e.ece_after = ece(after, options.bins);
    e.accuracy_before = label_accuracy(eval_logits, eval_labels);
    e.accuracy_after = e.accuracy_before;  // argmax preserved exactly
    outcome.comparison.per_run.push_back(e);
    outcome.fits.push_back(fit);
  };
  one_direction(logits_a, labels_a, logits_b, labels_b);
  if (split_half) one_direction(logits_b, labels_b, logits_a, labels_a);

  auto& c = outcome.comparison;
  c.tau = 0.0;
  c.nll_before = c.nll_after = c.ece_before = c.ece_after = 0.0;
  c.accuracy_before = c.accuracy_after = 0.0;
  for (const auto& e : c.per_run) {
    c.tau += e.tau;
    c.nll_before += e.nll_before;
    c.nll_after += e.nll_after;
    c.ece_before += e.ece_before;
    c.ece_after += e.ece_after;
    c.accuracy_before += e.accuracy_before;
    c.accuracy_after += e.accuracy_after;
    c.flat_objective = c.flat_objective || e.flat_objective;
  }
  const double n = static_cast<double>(c.per_run.size());
  c.tau /= n;
  c.nll_before /= n;
  c.nll_after /= n;
  c.ece_before /= n;
  c.ece_after /= n;
  c.accuracy_before /= n;
  c.accuracy_after /= n;
  return outcome;
}

}  // namespace calibreg
