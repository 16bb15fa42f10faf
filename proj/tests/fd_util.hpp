#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "nlbac/mlp.hpp"

namespace testutil {

// Relative error with an absolute-difference escape so that near-zero pairs
// compare cleanly.
inline double rel_err(double a, double b) {
  const double d = std::abs(a - b);
  if (d <= 1e-8) return 0.0;
  return d / std::max(std::abs(a), std::abs(b));
}

// Central difference of a scalar functional with respect to one flat
// parameter entry of p; restores p afterwards.
inline double fd_param(nlbac::MlpParams& p, std::size_t idx,
                       const std::function<double()>& value, double h = 1e-5) {
  nlbac::add_to_param(p, idx, h);
  const double up = value();
  nlbac::add_to_param(p, idx, -2.0 * h);
  const double dn = value();
  nlbac::add_to_param(p, idx, h);
  return (up - dn) / (2.0 * h);
}

// Worst relative error between an analytic gradient and central differences
// over every stride-th flat parameter.
inline double max_grad_err(nlbac::MlpParams& p, const nlbac::MlpGrad& g,
                           const std::function<double()>& value, double h = 1e-5,
                           std::size_t stride = 1) {
  double worst = 0.0;
  const std::size_t n = nlbac::param_count(p);
  for (std::size_t i = 0; i < n; i += stride) {
    const double fd = fd_param(p, i, value, h);
    worst = std::max(worst, rel_err(fd, nlbac::get_grad_entry(g, i)));
  }
  return worst;
}

inline double fd_scalar(double& x, const std::function<double()>& value, double h = 1e-6) {
  const double orig = x;
  x = orig + h;
  const double up = value();
  x = orig - h;
  const double dn = value();
  x = orig;
  return (up - dn) / (2.0 * h);
}

}  // namespace testutil
