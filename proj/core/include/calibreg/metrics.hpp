#pragma once

#include <optional>
#include <vector>

#include "calibreg/matrix.hpp"

namespace calibreg {

/// One evaluated sample. probabilities is always softmax(logits); predicted
/// is the argmax with ties broken toward the lowest class index; correct is
/// present exactly when label is.
struct PredictionRecord {
  std::vector<double> logits;
  std::vector<double> probabilities;
  int predicted = 0;
  std::optional<int> label;
  std::optional<bool> correct;
  bool ood = false;

  double confidence() const { return probabilities[predicted]; }
};

/// The single input format for every metric. Records derived from labeled
/// data carry label/correct; OOD rows carry ood=true and no label.
struct PredictionLog {
  int n_classes = 0;
  std::vector<PredictionRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t labeled_count() const;
};

/// Builds records from a logit batch; labels.size() must equal logits.rows().
PredictionLog log_from_logits(const Matrix& logits, const std::vector<int>& labels);

/// Appends unlabeled OOD rows for the given logits.
void append_ood_rows(PredictionLog& log, const Matrix& logits);

/// Appends labeled rows (used to merge evaluation batches).
void append_labeled_rows(PredictionLog& log, const Matrix& logits,
                         const std::vector<int>& labels);

/// Throws if any record violates the log invariants (probability/softmax
/// agreement, argmax tie rule, correctness flag consistency).
void validate_log(const PredictionLog& log);

/// Extracts the logits of all records as a matrix (row per record).
Matrix log_logits(const PredictionLog& log);

struct ConfidenceBin {
  double lower = 0.0;          // exclusive
  double upper = 0.0;          // inclusive
  std::size_t count = 0;
  double mean_accuracy = 0.0;  // 0 for empty bins
  double mean_confidence = 0.0;
};

/// Equal-width confidence bins ( i/M, (i+1)/M ] over the labeled records.
/// A confidence exactly equal to i/M lands in bin i-1; empty bins are kept
/// with count 0. Throws when the log has no labeled record.
std::vector<ConfidenceBin> confidence_bins(const PredictionLog& log, int n_bins);

/// Expected calibration error: bin-weighted mean |accuracy - confidence|.
/// Always in [0, 1]; multiply by 100 only at the presentation layer.
double ece(const PredictionLog& log, int n_bins);

/// Expected calibration divergence: bin-weighted cross-entropy
/// CE(acc || conf) with conf clamped to [eps, 1-eps], eps = 1e-7. The
/// negated binned estimate of the log-likelihood upper bound.
double ecd(const PredictionLog& log, int n_bins);

/// Per-sample upper bound on the expected log-likelihood under predictive
/// distribution phi when the true conditional is q:
///   q_m ln phi_m + (1 - q_m) ln(1 - phi_m),  m = argmax phi,
/// with phi_m clamped away from {0,1}. Certifies
/// sum_k q_k ln phi_k <= ll_upper_bound(q, phi).
double ll_upper_bound(const std::vector<double>& q, const std::vector<double>& phi);

/// Mean negative log-probability of the true labels over labeled records,
/// computed from the stored logits via log-sum-exp (matches nll_loss
/// exactly on shared data).
double nll(const PredictionLog& log);

/// Per-record entropy -sum_k phi_k ln phi_k, with 0 ln 0 := 0. Entries lie
/// in [0, ln K].
std::vector<double> predictive_entropy(const PredictionLog& log);

/// Monte-Carlo function norm of the logit map over an evaluation set:
/// p=1 -> (1/m) sum |z_ij|;  p=2 -> sqrt((1/m) sum z_ij^2) (the root is
/// reported for p=2, unlike the squared penalty used in training).
double function_lp_norm(const Matrix& logits, int p);

/// F1 of the rule "predict positive iff confidence > t" against
/// positive_flags (one per record). F1 := 0 when precision/recall are
/// undefined.
double f1_at_threshold(const PredictionLog& log, const std::vector<bool>& positive_flags,
                       double threshold);

/// Normalized bounded area under the calibration curve: the mean of
/// f1_at_threshold over the grid { tau * i / M : i = 1..M }.
double nbaucc(const PredictionLog& log, const std::vector<bool>& positive_flags,
              double tau, int m_steps);

}  // namespace calibreg
