#pragma once

#include <functional>
#include <string>

#include "gait/tensor.hpp"

namespace gait {

struct GradCheckReport {
  std::string layer;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// |a - n| / max(|a| + |n|, 1e-8); the floor keeps exact zeros from dividing by zero.
double relative_error(double analytic, double numeric);

/// Central-difference check of `analytic` (dF/dx at `x`) for a scalar function F.
/// Every element of `x` is perturbed by +-eps.
GradCheckReport check_gradient(std::string layer,
                               const std::function<double(const TensorD&)>& f,
                               const TensorD& x, const TensorD& analytic, double eps,
                               double tolerance);

}  // namespace gait
