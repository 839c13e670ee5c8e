#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

struct GradCheckOptions {
  double step = 1e-5;
  /// 0 checks every coordinate; otherwise a uniform random sample of this many.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// Also evaluates the central difference at step/2 and flags coordinates where the
  /// two disagree beyond truncation and rounding level: the +-h interval straddles a
  /// non-differentiable point such as a ReLU kink, so the difference quotient has not
  /// converged at this step. Costs two extra evaluations per coordinate.
  bool detect_kinks = false;
  double kink_rel_tol = 1e-4;
  double kink_abs_tol = 1e-8;
  /// Per-coordinate pass rule used for `violations`:
  /// |analytic - numeric| <= tolerance * max(|analytic|, |numeric|, 1e-12) + abs_floor.
  double tolerance = 1e-4;
  double abs_floor = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Filled only with detect_kinks: coordinates flagged as kink-straddling, and the
  /// max relative error over the remaining coordinates.
  std::size_t kink_coords = 0;
  double smooth_max_rel_error = 0.0;
  /// Coordinates breaking the pass rule, kink-straddling ones excluded when detected.
  std::size_t violations = 0;
};

/// Scalar objective for grad_check. When `with_grad` is true the callee must
/// accumulate dL/dparam into each Parameter::grad (grads are zeroed beforehand).
using Objective = std::function<double(bool with_grad)>;

/// Compares analytic gradients against central differences (f(x+h) - f(x-h)) / 2h.
/// Relative error uses max(|analytic|, |numeric|, 1e-12) as denominator.
/// Throws NumericError when the objective is not finite.
GradCheckReport grad_check(const Objective& objective, const std::vector<Parameter<double>*>& params,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric);

}  // namespace cdnet
