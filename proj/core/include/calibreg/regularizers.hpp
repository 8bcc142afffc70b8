#pragma once

#include <string>
#include <vector>

#include "calibreg/matrix.hpp"
#include "calibreg/network.hpp"
#include "calibreg/rng.hpp"

namespace calibreg {

enum class PenaltyKind { kNone, kL1Norm, kL2NormSquared, kSw1, kPer };

struct RegularizerConfig {
  PenaltyKind kind = PenaltyKind::kNone;
  double coefficient = 0.0;
  int n_projections = 256;
  // When true, one projection set is drawn at the start of training and
  // reused for every step; by default fresh directions are drawn per step.
  bool fixed_projections = false;
};

/// A penalty evaluated on a logit batch together with its exact gradient
/// with respect to every logit entry.
struct PenaltyValue {
  double value = 0.0;
  Matrix dlogits;
};

struct W1Result {
  double value = 0.0;
  std::vector<double> dsamples;
};

/// Monte-Carlo L^p penalty of the logit map over the batch:
/// p=1 -> (1/m) sum |z_ij| with the sign subgradient (0 at 0);
/// p=2 -> (1/m) sum z_ij^2 (no square root) with gradient 2 z / m.
PenaltyValue lp_penalty(const Matrix& logits, int p);

/// Uniform draw from the unit sphere S^{k-1} (normalized Gaussian vector).
std::vector<double> sample_unit_sphere(std::size_t k, Rng& rng);

/// Quantile-matching estimate of W1 between the empirical distribution of
/// `samples` and the standard Gaussian:
///   (1/m) sum_i | s_(i) - Phi^{-1}((i - 0.5)/m) |
/// over the order statistics s_(i). The gradient of each sample is
/// sign(s_(i) - q_i)/m routed back through the sort permutation (ties keep
/// their original order). At m=1 this evaluates the single sample against
/// the median, so the estimate of W1(delta_0, N(0,1)) is 0 rather than
/// sqrt(2/pi); that bias vanishes as m grows.
W1Result w1_empirical_vs_gaussian_1d(const std::vector<double>& samples);

/// Sliced Wasserstein-1 distance between the logit batch and a standard
/// Gaussian target: the mean over random unit directions theta of the 1-D
/// estimate on logits * theta. Gradients accumulate the 1-D sample gradients
/// times theta, averaged over projections.
PenaltyValue sw1_penalty(const Matrix& logits, int n_projections, Rng& rng);

/// Same computation on a caller-supplied projection set (one unit vector per
/// row). Used to share projections with per_penalty.
PenaltyValue sw1_penalty(const Matrix& logits, const Matrix& projections);

/// Projected error function regularizer: the Minkowski upper bound on SW1.
/// Averages the closed-form W1 between each projected logit (a point mass)
/// and N(0,1):  value = (1/m) sum_i mean_theta g(theta^T z_i).
PenaltyValue per_penalty(const Matrix& logits, int n_projections, Rng& rng);
PenaltyValue per_penalty(const Matrix& logits, const Matrix& projections);

/// g(a) = E|Z - a| for Z ~ N(0,1): a erf(a/sqrt 2) + sqrt(2/pi) exp(-a^2/2).
/// This is the exact W1 between a point mass at a and the standard Gaussian;
/// it behaves like a^2/2-ish near zero and like |a| in the tails.
double point_gaussian_w1(double a);

/// g'(a) = erf(a / sqrt 2).
double point_gaussian_w1_derivative(double a);

/// Inverse standard-normal CDF. Acklam's rational approximation refined by
/// one Halley step against erfc, giving well below 1e-9 absolute error over
/// (0, 1). Throws outside (0, 1).
double inverse_normal_cdf(double p);

/// Multiplies every weight matrix by (1 - lr * decay_rate); biases are
/// exempt. Applied by the trainer before the momentum update. Throws if the
/// factor is negative (decay overshoot).
void decoupled_weight_decay_step(Network& net, double decay_rate, double lr);

const char* penalty_kind_name(PenaltyKind k);
PenaltyKind penalty_kind_from_name(const std::string& name);

}  // namespace calibreg
