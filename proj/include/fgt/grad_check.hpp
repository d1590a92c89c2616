#pragma once

#include <cmath>
#include <functional>

#include "fgt/tensor.hpp"

namespace fgt {

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;  // max|a - n| / max(max|a|, max|n|, 1e-8)
  Index worst_index = -1;
  Index checked = 0;
  bool passed = false;
};

/// Compares `analytic` (d f / d x) against central differences of the scalar
/// function `f` around `x`. Coordinates for which `skip` returns true are ignored.
template <class Scalar>
GradCheckReport grad_check(const std::function<Scalar(const BasicTensor<Scalar>&)>& f,
                           const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& analytic,
                           double epsilon = 1e-5, double tolerance = 1e-4,
                           const std::function<bool(Index)>& skip = {}) {
  if (analytic.shape() != x.shape())
    throw DimensionError("grad_check: analytic gradient shape " + shape_string(analytic.shape()) +
                         " != input " + shape_string(x.shape()));
  GradCheckReport report;
  double scale = 1e-8;
  BasicTensor<Scalar> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    if (skip && skip(i)) continue;
    const Scalar saved = probe[i];
    probe[i] = saved + Scalar(epsilon);
    const double up = static_cast<double>(f(probe));
    probe[i] = saved - Scalar(epsilon);
    const double down = static_cast<double>(f(probe));
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = static_cast<double>(analytic[i]);
    const double diff = std::abs(a - numeric);
    if (diff > report.max_abs_error) {
      report.max_abs_error = diff;
      report.worst_index = i;
    }
    scale = std::max({scale, std::abs(a), std::abs(numeric)});
    ++report.checked;
  }
  report.max_rel_error = report.max_abs_error / scale;
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace fgt
