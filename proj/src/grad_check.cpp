#include "gait/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace gait {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
}

GradCheckReport check_gradient(std::string layer,
                               const std::function<double(const TensorD&)>& f,
                               const TensorD& x, const TensorD& analytic, double eps,
                               double tolerance) {
  require_shape(analytic.shape(), x.shape(), "check_gradient analytic");
  GradCheckReport report{std::move(layer), 0.0, tolerance, false};
  TensorD probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2 * eps);
    report.max_relative_error =
        std::max(report.max_relative_error, relative_error(analytic[i], numeric));
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace gait
