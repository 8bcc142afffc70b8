#pragma once

#include <functional>
#include <vector>

namespace calibreg {

/// Central finite differences (f(x + h e_i) - f(x - h e_i)) / 2h per
/// coordinate. The canonical oracle for every analytic gradient in the
/// library. Throws if f evaluates to a non-finite value or step <= 0.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& at, double step);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor) -- the comparison used by the
/// gradient-check suites. `floor` guards coordinates where both entries are
/// tiny and the quotient would be dominated by roundoff.
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-6);

}  // namespace calibreg
