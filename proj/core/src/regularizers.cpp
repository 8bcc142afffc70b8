#include "calibreg/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace calibreg {

namespace {

const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_finite_logits(const Matrix& logits, const char* who) {
  if (logits.rows() == 0 || logits.cols() == 0) {
    throw std::invalid_argument(std::string(who) + ": empty logit batch");
  }
  if (!is_finite(logits)) {
    throw std::invalid_argument(std::string(who) + ": non-finite logits");
  }
}

Matrix draw_projections(std::size_t k, int n_projections, Rng& rng) {
  if (n_projections < 1) {
    throw std::invalid_argument("projection count must be >= 1");
  }
  Matrix dirs(static_cast<std::size_t>(n_projections), k);
  for (int p = 0; p < n_projections; ++p) {
    const auto theta = sample_unit_sphere(k, rng);
    std::copy(theta.begin(), theta.end(), dirs.row(p));
  }
  return dirs;
}

}  // namespace

PenaltyValue lp_penalty(const Matrix& logits, int p) {
  require_finite_logits(logits, "lp_penalty");
  if (p != 1 && p != 2) {
    throw std::invalid_argument("lp_penalty: p must be 1 or 2, got " + std::to_string(p));
  }
  const double m = static_cast<double>(logits.rows());
  PenaltyValue out;
  out.dlogits = Matrix(logits.rows(), logits.cols());
  const double* z = logits.data();
  double* d = out.dlogits.data();
  double acc = 0.0;
  if (p == 1) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      acc += std::abs(z[i]);
      d[i] = sign_of(z[i]) / m;
    }
  } else {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      acc += z[i] * z[i];
      d[i] = 2.0 * z[i] / m;
    }
  }
  out.value = acc / m;
  return out;
}

std::vector<double> sample_unit_sphere(std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("sample_unit_sphere: k must be >= 1");
  std::vector<double> v(k);
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (auto& x : v) {
      x = rng.gaussian();
      norm_sq += x * x;
    }
  } while (norm_sq == 0.0);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (auto& x : v) x *= inv;
  return v;
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("inverse_normal_cdf: p must be in (0, 1)");
  }
  // Acklam's rational approximation (relative error ~1.15e-9).
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF via erfc.
  const double err = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = err * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

W1Result w1_empirical_vs_gaussian_1d(const std::vector<double>& samples) {
  const std::size_t m = samples.size();
  if (m == 0) throw std::invalid_argument("w1_empirical_vs_gaussian_1d: empty sample set");
  for (double s : samples) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("w1_empirical_vs_gaussian_1d: non-finite sample");
    }
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return samples[i] < samples[j]; });

  W1Result out;
  out.dsamples.assign(m, 0.0);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t rank = 0; rank < m; ++rank) {
    const double q = inverse_normal_cdf((static_cast<double>(rank) + 0.5) * inv_m);
    const double diff = samples[order[rank]] - q;
    out.value += std::abs(diff);
    out.dsamples[order[rank]] = sign_of(diff) * inv_m;
  }
  out.value *= inv_m;
  return out;
}

PenaltyValue sw1_penalty(const Matrix& logits, const Matrix& projections) {
  require_finite_logits(logits, "sw1_penalty");
  if (projections.cols() != logits.cols()) {
    throw std::invalid_argument("sw1_penalty: projection width " + shape_string(projections) +
                                " does not match logits " + shape_string(logits));
  }
  const std::size_t m = logits.rows();
  const std::size_t k = logits.cols();
  const std::size_t n_proj = projections.rows();

  PenaltyValue out;
  out.dlogits = Matrix(m, k);
  std::vector<double> projected(m);
  for (std::size_t p = 0; p < n_proj; ++p) {
    const double* theta = projections.row(p);
    for (std::size_t i = 0; i < m; ++i) {
      const double* zi = logits.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += zi[j] * theta[j];
      projected[i] = acc;
    }
    const W1Result w1 = w1_empirical_vs_gaussian_1d(projected);
    out.value += w1.value;
    for (std::size_t i = 0; i < m; ++i) {
      const double g = w1.dsamples[i];
      if (g == 0.0) continue;
      double* drow = out.dlogits.row(i);
      for (std::size_t j = 0; j < k; ++j) drow[j] += g * theta[j];
    }
  }
  const double inv_p = 1.0 / static_cast<double>(n_proj);
  out.value *= inv_p;
  for (std::size_t i = 0; i < out.dlogits.size(); ++i) out.dlogits.data()[i] *= inv_p;
  return out;
}

PenaltyValue sw1_penalty(const Matrix& logits, int n_projections, Rng& rng) {
  return sw1_penalty(logits, draw_projections(logits.cols(), n_projections, rng));
}

double point_gaussian_w1(double a) {
  return a * std::erf(a / std::numbers::sqrt2) + kSqrt2OverPi * std::exp(-a * a / 2.0);
}

double point_gaussian_w1_derivative(double a) { return std::erf(a / std::numbers::sqrt2); }

PenaltyValue per_penalty(const Matrix& logits, const Matrix& projections) {
  require_finite_logits(logits, "per_penalty");
  if (projections.cols() != logits.cols()) {
    throw std::invalid_argument("per_penalty: projection width " + shape_string(projections) +
                                " does not match logits " + shape_string(logits));
  }
  const std::size_t m = logits.rows();
  const std::size_t k = logits.cols();
  const std::size_t n_proj = projections.rows();

  PenaltyValue out;
  out.dlogits = Matrix(m, k);
  const double scale = 1.0 / (static_cast<double>(m) * static_cast<double>(n_proj));
  for (std::size_t p = 0; p < n_proj; ++p) {
    const double* theta = projections.row(p);
    for (std::size_t i = 0; i < m; ++i) {
      const double* zi = logits.row(i);
      double t = 0.0;
      for (std::size_t j = 0; j < k; ++j) t += zi[j] * theta[j];
      out.value += point_gaussian_w1(t);
      const double g = point_gaussian_w1_derivative(t) * scale;
      double* drow = out.dlogits.row(i);
      for (std::size_t j = 0; j < k; ++j) drow[j] += g * theta[j];
    }
  }
  out.value *= scale;
  return out;
}

PenaltyValue per_penalty(const Matrix& logits, int n_projections, Rng& rng) {
  return per_penalty(logits, draw_projections(logits.cols(), n_projections, rng));
}

void decoupled_weight_decay_step(Network& net, double decay_rate, double lr) {
  if (decay_rate < 0.0) {
    throw std::invalid_argument("decoupled_weight_decay_step: negative decay rate");
  }
  const double factor = 1.0 - lr * decay_rate;
  if (factor < 0.0) {
    throw std::invalid_argument(
        "decoupled_weight_decay_step: decay overshoot, 1 - lr*decay = " +
        std::to_string(factor));
  }
  if (decay_rate == 0.0) return;
  for (auto& layer : net.layers()) {
    double* w = layer.weight.data();
    for (std::size_t i = 0; i < layer.weight.size(); ++i) w[i] *= factor;
  }
}

const char* penalty_kind_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::kNone: return "none";
    case PenaltyKind::kL1Norm: return "l1_norm";
    case PenaltyKind::kL2NormSquared: return "l2_norm_squared";
    case PenaltyKind::kSw1: return "sw1";
    case PenaltyKind::kPer: return "per";
  }
  return "none";
}

PenaltyKind penalty_kind_from_name(const std::string& name) {
  if (name == "none") return PenaltyKind::kNone;
  if (name == "l1_norm") return PenaltyKind::kL1Norm;
  if (name == "l2_norm_squared") return PenaltyKind::kL2NormSquared;
  if (name == "sw1") return PenaltyKind::kSw1;
  if (name == "per") return PenaltyKind::kPer;
  throw std::invalid_argument("unknown penalty kind: " + name);
}

}  // namespace calibreg
