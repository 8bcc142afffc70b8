#include "calibreg/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "calibreg/io.hpp"

namespace calibreg {

RunMetrics compute_run_metrics(const PredictionLog& log, const MetricOptions& options) {
  RunMetrics m;

  PredictionLog labeled;
  labeled.n_classes = log.n_classes;
  bool has_ood = false;
  for (const auto& rec : log.records) {
    if (rec.label) labeled.records.push_back(rec);
    if (rec.ood) has_ood = true;
  }
  if (labeled.records.empty()) {
    throw std::invalid_argument("compute_run_metrics: log has no labeled records");
  }

  std::size_t correct_count = 0;
  for (const auto& rec : labeled.records) correct_count += *rec.correct;
  m.accuracy = static_cast<double>(correct_count) / labeled.records.size();
  m.nll_value = nll(labeled);
  m.ece_value = ece(labeled, options.bins);
  m.ecd_value = ecd(labeled, options.bins);

  const Matrix labeled_logits = log_logits(labeled);
  m.l1_norm = function_lp_norm(labeled_logits, 1);
  m.l2_norm = function_lp_norm(labeled_logits, 2);

  double max_log_prob = 0.0;
  for (const auto& rec : labeled.records) {
    max_log_prob += std::log(std::max(rec.confidence(), 1e-300));
  }
  m.mean_max_log_prob = max_log_prob / labeled.records.size();

  const auto entropies = predictive_entropy(log);
  double h_correct = 0.0, h_wrong = 0.0, h_ood = 0.0;
  std::size_t n_correct = 0, n_wrong = 0, n_ood = 0;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& rec = log.records[i];
    if (rec.ood) {
      h_ood += entropies[i];
      ++n_ood;
    } else if (rec.correct && *rec.correct) {
      h_correct += entropies[i];
      ++n_correct;
    } else if (rec.correct) {
      h_wrong += entropies[i];
      ++n_wrong;
    }
  }
  m.mean_entropy_correct = n_correct ? h_correct / n_correct : 0.0;
  m.mean_entropy_misclassified = n_wrong ? h_wrong / n_wrong : 0.0;
  m.mean_entropy_ood = n_ood ? h_ood / n_ood : 0.0;

  // Misclassification detection: labeled rows, positive = correct.
  std::vector<bool> correct_flags;
  correct_flags.reserve(labeled.records.size());
  for (const auto& rec : labeled.records) correct_flags.push_back(*rec.correct);
  m.nbaucc_misclassification =
      nbaucc(labeled, correct_flags, options.nbaucc_tau, options.nbaucc_steps);

  // OOD detection: every row, positive = in-distribution.
  if (has_ood) {
    std::vector<bool> indist_flags;
    indist_flags.reserve(log.records.size());
    for (const auto& rec : log.records) indist_flags.push_back(!rec.ood);
    m.nbaucc_ood = nbaucc(log, indist_flags, options.nbaucc_tau, options.nbaucc_steps);
  }
  return m;
}

std::vector<ReliabilityRow> reliability_table(const PredictionLog& log, int bins) {
  const auto cb = confidence_bins(log, bins);
  std::vector<ReliabilityRow> rows;
  rows.reserve(cb.size());
  for (const auto& bin : cb) {
    ReliabilityRow row;
    row.midpoint = (bin.lower + bin.upper) / 2.0;
    row.accuracy = bin.mean_accuracy;
    row.confidence = bin.mean_confidence;
    row.count = bin.count;
    rows.push_back(row);
  }
  return rows;
}

EntropyHistogram entropy_histogram_table(const PredictionLog& log, int bins) {
  if (bins < 1) throw std::invalid_argument("entropy_histogram_table: bins must be >= 1");
  EntropyHistogram hist;
  const double max_entropy = std::log(static_cast<double>(log.n_classes));
  hist.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) hist.edges[b] = max_entropy * b / bins;
  hist.density_correct.assign(bins, 0.0);
  hist.density_misclassified.assign(bins, 0.0);
  hist.density_ood.assign(bins, 0.0);

  const auto entropies = predictive_entropy(log);
  const double width = max_entropy / bins;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    int b = std::min(static_cast<int>(entropies[i] / width), bins - 1);
    b = std::max(b, 0);
    const auto& rec = log.records[i];
    if (rec.ood) {
      hist.density_ood[b] += 1.0;
      ++hist.count_ood;
    } else if (rec.correct && *rec.correct) {
      hist.density_correct[b] += 1.0;
      ++hist.count_correct;
    } else if (rec.correct) {
      hist.density_misclassified[b] += 1.0;
      ++hist.count_misclassified;
    }
  }
  auto normalize = [&](std::vector<double>& density, std::size_t count) {
    if (count == 0) return;
    for (double& v : density) v /= static_cast<double>(count) * width;
  };
  normalize(hist.density_correct, hist.count_correct);
  normalize(hist.density_misclassified, hist.count_misclassified);
  normalize(hist.density_ood, hist.count_ood);
  return hist;
}

RunMetrics mean_metrics(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw std::invalid_argument("mean_metrics: no runs");
  RunMetrics m;
  const double n = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    m.accuracy += r.accuracy / n;
    m.validation_accuracy += r.validation_accuracy / n;
    m.nll_value += r.nll_value / n;
    m.ece_value += r.ece_value / n;
    m.ecd_value += r.ecd_value / n;
    m.l1_norm += r.l1_norm / n;
    m.l2_norm += r.l2_norm / n;
    m.mean_max_log_prob += r.mean_max_log_prob / n;
    m.mean_entropy_correct += r.mean_entropy_correct / n;
    m.mean_entropy_misclassified += r.mean_entropy_misclassified / n;
    m.mean_entropy_ood += r.mean_entropy_ood / n;
    m.nbaucc_misclassification += r.nbaucc_misclassification / n;
    m.nbaucc_ood += r.nbaucc_ood / n;
    m.collapsed = m.collapsed || r.collapsed;
    m.diverged = m.diverged || r.diverged;
  }
  return m;
}

namespace {

nlohmann::json metrics_to_json(const RunMetrics& m, bool with_seed) {
  nlohmann::json j{{"accuracy", m.accuracy},
                   {"validation_accuracy", m.validation_accuracy},
                   {"nll", m.nll_value},
                   {"ece", m.ece_value},
                   {"ecd", m.ecd_value},
                   {"l1_norm", m.l1_norm},
                   {"l2_norm", m.l2_norm},
                   {"mean_max_log_prob", m.mean_max_log_prob},
                   {"mean_entropy_correct", m.mean_entropy_correct},
                   {"mean_entropy_misclassified", m.mean_entropy_misclassified},
                   {"mean_entropy_ood", m.mean_entropy_ood},
                   {"nbaucc_misclassification", m.nbaucc_misclassification},
                   {"nbaucc_ood", m.nbaucc_ood},
                   {"collapsed", m.collapsed},
                   {"diverged", m.diverged}};
  if (with_seed) j["seed"] = m.seed;
  return j;
}

}  // namespace

nlohmann::json report_to_json(const CalibrationReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) runs.push_back(metrics_to_json(r, true));

  nlohmann::json reliability = nlohmann::json::array();
  for (const auto& row : report.reliability) {
    reliability.push_back(nlohmann::json{{"midpoint", row.midpoint},
                                         {"accuracy", row.accuracy},
                                         {"confidence", row.confidence},
                                         {"count", row.count}});
  }

  const auto& h = report.entropy_histogram;
  nlohmann::json histogram{{"edges", h.edges},
                           {"density_correct", h.density_correct},
                           {"density_misclassified", h.density_misclassified},
                           {"density_ood", h.density_ood},
                           {"count_correct", h.count_correct},
                           {"count_misclassified", h.count_misclassified},
                           {"count_ood", h.count_ood}};

  nlohmann::json j{{"schema", "calibreg.report.v1"},
                   {"tag", report.tag},
                   {"k", report.n_classes},
                   {"metric_options",
                    {{"bins", report.options.bins},
                     {"nbaucc_tau", report.options.nbaucc_tau},
                     {"nbaucc_steps", report.options.nbaucc_steps}}},
                   {"runs", std::move(runs)},
                   {"mean", metrics_to_json(report.mean, false)},
                   {"reliability", std::move(reliability)},
                   {"entropy_histogram", std::move(histogram)}};
  if (report.temperature_scaling) {
    const auto& ts = *report.temperature_scaling;
    nlohmann::json per_run = nlohmann::json::array();
    for (const auto& e : ts.per_run) {
      per_run.push_back(nlohmann::json{{"seed", e.seed},
                                       {"tau", e.tau},
                                       {"nll_before", e.nll_before},
                                       {"nll_after", e.nll_after},
                                       {"ece_before", e.ece_before},
                                       {"ece_after", e.ece_after},
                                       {"accuracy_before", e.accuracy_before},
                                       {"accuracy_after", e.accuracy_after},
                                       {"flat_objective", e.flat_objective}});
    }
    j["temperature_scaling"] = nlohmann::json{{"tau", ts.tau},
                                              {"nll_before", ts.nll_before},
                                              {"nll_after", ts.nll_after},
                                              {"ece_before", ts.ece_before},
                                              {"ece_after", ts.ece_after},
                                              {"accuracy_before", ts.accuracy_before},
                                              {"accuracy_after", ts.accuracy_after},
                                              {"flat_objective", ts.flat_objective},
                                              {"per_run", std::move(per_run)}};
  }
  return j;
}

std::string reliability_csv(const std::vector<ReliabilityRow>& rows) {
  std::ostringstream out;
  out << "# {\"schema\":\"calibreg.reliability.v1\"}\n";
  out << "midpoint,accuracy,confidence,count\n";
  for (const auto& r : rows) {
    out << format_double(r.midpoint) << "," << format_double(r.accuracy) << ","
        << format_double(r.confidence) << "," << r.count << "\n";
  }
  return out.str();
}

std::string entropy_histogram_csv(const EntropyHistogram& histogram) {
  std::ostringstream out;
  out << "# {\"schema\":\"calibreg.entropy_histogram.v1\"}\n";
  out << "lower,upper,density_correct,density_misclassified,density_ood\n";
  for (std::size_t b = 0; b + 1 < histogram.edges.size(); ++b) {
    out << format_double(histogram.edges[b]) << "," << format_double(histogram.edges[b + 1])
        << "," << format_double(histogram.density_correct[b]) << ","
        << format_double(histogram.density_misclassified[b]) << ","
        << format_double(histogram.density_ood[b]) << "\n";
  }
  return out.str();
}

}  // namespace calibreg
