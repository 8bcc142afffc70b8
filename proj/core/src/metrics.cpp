#include "calibreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "calibreg/network.hpp"

namespace calibreg {

namespace {

constexpr double kProbEps = 1e-7;

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

int argmax_lowest_tie(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

PredictionRecord make_record(const Matrix& logits, const Matrix& probs, std::size_t row) {
  PredictionRecord rec;
  rec.logits = logits.row_copy(row);
  rec.probabilities = probs.row_copy(row);
  rec.predicted = argmax_lowest_tie(rec.probabilities);
  return rec;
}

void require_labeled(const PredictionLog& log, const char* who) {
  if (log.labeled_count() == 0) {
    throw std::invalid_argument(std::string(who) + ": log has no labeled records");
  }
}

}  // namespace

std::size_t PredictionLog::labeled_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.label.has_value();
  return n;
}

PredictionLog log_from_logits(const Matrix& logits, const std::vector<int>& labels) {
  PredictionLog log;
  log.n_classes = static_cast<int>(logits.cols());
  append_labeled_rows(log, logits, labels);
  return log;
}

void append_labeled_rows(PredictionLog& log, const Matrix& logits,
                         const std::vector<int>& labels) {
  if (labels.size() != logits.rows()) {
    throw std::invalid_argument("append_labeled_rows: one label per row required");
  }
  if (log.n_classes == 0) log.n_classes = static_cast<int>(logits.cols());
  if (static_cast<int>(logits.cols()) != log.n_classes) {
    throw std::invalid_argument("append_labeled_rows: class count mismatch");
  }
  const Matrix probs = softmax(logits);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || y >= log.n_classes) {
      throw std::invalid_argument("append_labeled_rows: label out of range");
    }
    PredictionRecord rec = make_record(logits, probs, r);
    rec.label = y;
    rec.correct = rec.predicted == y;
    log.records.push_back(std::move(rec));
  }
}

void append_ood_rows(PredictionLog& log, const Matrix& logits) {
  if (log.n_classes == 0) log.n_classes = static_cast<int>(logits.cols());
  if (static_cast<int>(logits.cols()) != log.n_classes) {
    throw std::invalid_argument("append_ood_rows: class count mismatch");
  }
  const Matrix probs = softmax(logits);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    PredictionRecord rec = make_record(logits, probs, r);
    rec.ood = true;
    log.records.push_back(std::move(rec));
  }
}

void validate_log(const PredictionLog& log) {
  for (const auto& rec : log.records) {
    if (static_cast<int>(rec.logits.size()) != log.n_classes ||
        static_cast<int>(rec.probabilities.size()) != log.n_classes) {
      throw std::invalid_argument("validate_log: record width mismatch");
    }
    Matrix z(1, rec.logits.size());
    std::copy(rec.logits.begin(), rec.logits.end(), z.data());
    const Matrix probs = softmax(z);
    for (int k = 0; k < log.n_classes; ++k) {
      if (std::abs(probs(0, k) - rec.probabilities[k]) > 1e-9) {
        throw std::invalid_argument("validate_log: probabilities are not softmax(logits)");
      }
    }
    if (rec.predicted != argmax_lowest_tie(rec.probabilities)) {
      throw std::invalid_argument("validate_log: predicted is not the argmax");
    }
    if (rec.label.has_value() != rec.correct.has_value()) {
      throw std::invalid_argument("validate_log: correct must accompany label");
    }
    if (rec.label && *rec.correct != (rec.predicted == *rec.label)) {
      throw std::invalid_argument("validate_log: stale correctness flag");
    }
  }
}

Matrix log_logits(const PredictionLog& log) {
  Matrix out(log.records.size(), log.n_classes);
  for (std::size_t r = 0; r < log.records.size(); ++r) {
    std::copy(log.records[r].logits.begin(), log.records[r].logits.end(), out.row(r));
  }
  return out;
}

std::vector<ConfidenceBin> confidence_bins(const PredictionLog& log, int n_bins) {
  if (n_bins < 1) throw std::invalid_argument("confidence_bins: n_bins must be >= 1");
  require_labeled(log, "confidence_bins");
  std::vector<ConfidenceBin> bins(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    bins[b].lower = static_cast<double>(b) / n_bins;
    bins[b].upper = static_cast<double>(b + 1) / n_bins;
  }
  for (const auto& rec : log.records) {
    if (!rec.label) continue;
    const double conf = rec.confidence();
    // ( b/M, (b+1)/M ]: a confidence exactly b/M belongs to bin b-1.
    int b = static_cast<int>(std::ceil(conf * n_bins)) - 1;
    b = std::clamp(b, 0, n_bins - 1);
    auto& bin = bins[b];
    bin.count += 1;
    bin.mean_confidence += conf;
    bin.mean_accuracy += *rec.correct ? 1.0 : 0.0;
  }
  for (auto& bin : bins) {
    if (bin.count > 0) {
      bin.mean_confidence /= static_cast<double>(bin.count);
      bin.mean_accuracy /= static_cast<double>(bin.count);
    }
  }
  return bins;
}

double ece(const PredictionLog& log, int n_bins) {
  const auto bins = confidence_bins(log, n_bins);
  const double n = static_cast<double>(log.labeled_count());
  double total = 0.0;
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    total += static_cast<double>(bin.count) / n *
             std::abs(bin.mean_accuracy - bin.mean_confidence);
  }
  return total;
}

double ecd(const PredictionLog& log, int n_bins) {
  const auto bins = confidence_bins(log, n_bins);
  const double n = static_cast<double>(log.labeled_count());
  double total = 0.0;
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    const double a = bin.mean_accuracy;
    const double c = clamp_prob(bin.mean_confidence);
    const double cross_entropy = -(a * std::log(c) + (1.0 - a) * std::log(1.0 - c));
    total += static_cast<double>(bin.count) / n * cross_entropy;
  }
  return total;
}

double ll_upper_bound(const std::vector<double>& q, const std::vector<double>& phi) {
  if (q.size() != phi.size() || q.empty()) {
    throw std::invalid_argument("ll_upper_bound: q and phi must be same-length simplex vectors");
  }
  const int m = argmax_lowest_tie(phi);
  const double phi_m = clamp_prob(phi[m]);
  const double q_m = q[m];
  return q_m * std::log(phi_m) + (1.0 - q_m) * std::log(1.0 - phi_m);
}

double nll(const PredictionLog& log) {
  require_labeled(log, "nll");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& rec : log.records) {
    if (!rec.label) continue;
    const auto& z = rec.logits;
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    total += (mx + std::log(sum)) - z[*rec.label];
    ++n;
  }
  return total / static_cast<double>(n);
}

std::vector<double> predictive_entropy(const PredictionLog& log) {
  std::vector<double> out;
  out.reserve(log.records.size());
  for (const auto& rec : log.records) {
    double h = 0.0;
    for (double p : rec.probabilities) {
      if (p > 0.0) h -= p * std::log(p);
    }
    out.push_back(h);
  }
  return out;
}

double function_lp_norm(const Matrix& logits, int p) {
  if (logits.rows() == 0) throw std::invalid_argument("function_lp_norm: empty logit set");
  if (p != 1 && p != 2) {
    throw std::invalid_argument("function_lp_norm: p must be 1 or 2");
  }
  const double m = static_cast<double>(logits.rows());
  const double* z = logits.data();
  double acc = 0.0;
  if (p == 1) {
    for (std::size_t i = 0; i < logits.size(); ++i) acc += std::abs(z[i]);
    return acc / m;
  }
  for (std::size_t i = 0; i < logits.size(); ++i) acc += z[i] * z[i];
  return std::sqrt(acc / m);
}

double f1_at_threshold(const PredictionLog& log, const std::vector<bool>& positive_flags,
                       double threshold) {
  if (positive_flags.size() != log.records.size()) {
    throw std::invalid_argument("f1_at_threshold: one flag per record required");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const bool predicted_positive = log.records[i].confidence() > threshold;
    if (predicted_positive && positive_flags[i]) ++tp;
    else if (predicted_positive) ++fp;
    else if (positive_flags[i]) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

double nbaucc(const PredictionLog& log, const std::vector<bool>& positive_flags,
              double tau, int m_steps) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("nbaucc: tau must be in (0, 1]");
  }
  if (m_steps < 1) throw std::invalid_argument("nbaucc: m_steps must be >= 1");
  double total = 0.0;
  for (int i = 1; i <= m_steps; ++i) {
    total += f1_at_threshold(log, positive_flags, tau * i / m_steps);
  }
  return total / m_steps;
}

}  // namespace calibreg
