#include "calibreg/calibration.hpp"

#include <cmath>
#include <stdexcept>

#include "calibreg/network.hpp"

namespace calibreg {

namespace {

constexpr double kTauLow = 0.05;
constexpr double kTauHigh = 20.0;
constexpr int kGridPoints = 61;
constexpr double kRefineTol = 1e-4;

double holdout_nll(const Matrix& logits, const std::vector<int>& labels, double tau) {
  return nll_loss(apply_temperature(logits, tau), labels).loss;
}

}  // namespace

Matrix apply_temperature(const Matrix& logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("apply_temperature: tau must be > 0");
  Matrix out = logits;
  double* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) p[i] /= tau;
  return out;
}

TemperatureFit fit_temperature(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() == 0) throw std::invalid_argument("fit_temperature: empty holdout");
  if (labels.size() != logits.rows()) {
    throw std::invalid_argument("fit_temperature: one label per row required");
  }

  TemperatureFit fit;
  fit.holdout_nll_before = holdout_nll(logits, labels, 1.0);

  // Coarse log-spaced grid; tau = 1 is evaluated explicitly so the fit can
  // never end up worse than no scaling.
  const double log_low = std::log(kTauLow);
  const double log_high = std::log(kTauHigh);
  int best = 0;
  for (int i = 0; i < kGridPoints; ++i) {
    const double tau = std::exp(log_low + (log_high - log_low) * i / (kGridPoints - 1));
    fit.trace_taus.push_back(tau);
    fit.trace_nlls.push_back(holdout_nll(logits, labels, tau));
    if (fit.trace_nlls.back() < fit.trace_nlls[best]) best = i;
  }

  double lo = fit.trace_nlls[0], hi = fit.trace_nlls[0];
  for (double v : fit.trace_nlls) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12 * (1.0 + std::abs(hi))) {
    fit.flat_objective = true;
    fit.tau = 1.0;
    fit.holdout_nll_after = fit.holdout_nll_before;
    return fit;
  }

  if (best == 0 || best == kGridPoints - 1) fit.bracket_warning = true;
  double a = fit.trace_taus[best > 0 ? best - 1 : best];
  double b = fit.trace_taus[best + 1 < kGridPoints ? best + 1 : best];

  // Golden-section refinement inside the bracketing interval.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = holdout_nll(logits, labels, x1);
  double f2 = holdout_nll(logits, labels, x2);
  while (b - a > kRefineTol) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = holdout_nll(logits, labels, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = holdout_nll(logits, labels, x2);
    }
  }
  double tau = (a + b) / 2.0;
  double after = holdout_nll(logits, labels, tau);
  // Keep the invariant nll_after <= nll_before even in degenerate landscapes.
  if (after > fit.holdout_nll_before) {
    tau = 1.0;
    after = fit.holdout_nll_before;
  }
  fit.tau = tau;
  fit.holdout_nll_after = after;
  return fit;
}

}  // namespace calibreg
