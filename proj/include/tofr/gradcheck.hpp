#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

namespace tofr {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = false;

  std::string summary() const;
};

/// Relative error used throughout: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-7);

/// Compares `analytic` against central differences of `loss` around `point`
/// (perturbing each coordinate by +/- step). `loss` must leave `point`
/// unchanged on return. `floor` bounds the error denominator so that
/// entries whose true gradient is zero are judged on absolute error.
GradCheckReport gradient_check(const std::function<double(std::span<double>)>& loss,
                               std::span<double> point, std::span<const double> analytic,
                               double step, double tolerance, double floor = 1e-7);

}  // namespace tofr
