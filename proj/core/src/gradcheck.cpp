#include "calibreg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace calibreg {

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& at, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be > 0");
  std::vector<double> x = at;
  std::vector<double> grad(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_grad: non-finite function value");
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double floor) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("max_relative_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace calibreg
