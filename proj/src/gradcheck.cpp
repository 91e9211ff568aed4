#include "tofr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tofr/errors.hpp"

namespace tofr {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << ": max relative error " << max_relative_error << " at index "
     << worst_index << " (analytic " << worst_analytic << ", numeric " << worst_numeric << ", "
     << checked << " entries)";
  return os.str();
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport gradient_check(const std::function<double(std::span<double>)>& loss,
                               std::span<double> point, std::span<const double> analytic,
                               double step, double tolerance, double floor) {
  if (point.size() != analytic.size()) {
    throw Error(ErrorKind::kConfig, "gradient_check: point and gradient sizes differ");
  }
  GradCheckReport report;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double up = loss(point);
    point[i] = saved - step;
    const double down = loss(point);
    point[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric, floor);
    if (err > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace tofr
