#pragma once

#include <vector>

#include "calibreg/matrix.hpp"

namespace calibreg {

struct TemperatureFit {
  double tau = 1.0;
  double holdout_nll_before = 0.0;  // NLL at tau = 1
  double holdout_nll_after = 0.0;   // NLL at the fitted tau
  bool flat_objective = false;      // objective had no usable curvature
  bool bracket_warning = false;     // optimum sat on a search-interval edge
  std::vector<double> trace_taus;   // coarse-grid search trace
  std::vector<double> trace_nlls;
};

/// Fits the temperature that minimizes holdout NLL of logits / tau: a
/// log-spaced coarse grid over [0.05, 20] followed by golden-section
/// refinement to |delta tau| < 1e-4. A flat objective (e.g. every logit row
/// constant) returns tau = 1 with flat_objective set.
TemperatureFit fit_temperature(const Matrix& logits, const std::vector<int>& labels);

/// Element-wise logits / tau. Preserves every row's argmax, hence accuracy.
/// Throws for tau <= 0.
Matrix apply_temperature(const Matrix& logits, double tau);

}  // namespace calibreg
