#include "cdnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cdnet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double checked(const Objective& f, bool with_grad, const char* where) {
  const double v = f(with_grad);
  if (!std::isfinite(v)) {
    throw NumericError(std::string("grad_check: non-finite objective ") + where);
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const Objective& objective, const std::vector<Parameter<double>*>& params,
                           const GradCheckOptions& options) {
  for (auto* p : params) p->grad.zero();
  checked(objective, true, "at the base point");

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t i = 0; i < params[pi]->value.size(); ++i) coords.emplace_back(pi, i);
  }
  if (options.max_coords > 0 && options.max_coords < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  const double h = options.step;
  for (const auto& [pi, i] : coords) {
    double& x = params[pi]->value[i];
    const double saved = x;
    x = saved + h;
    const double up = checked(objective, false, "at +h");
    x = saved - h;
    const double down = checked(objective, false, "at -h");
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = params[pi]->grad[i];
    const double err = relative_error(analytic, numeric);
    bool kink = false;
    if (options.detect_kinks) {
      x = saved + h / 2;
      const double up_half = checked(objective, false, "at +h/2");
      x = saved - h / 2;
      const double down_half = checked(objective, false, "at -h/2");
      const double numeric_half = (up_half - down_half) / h;
      const double gap = std::abs(numeric - numeric_half);
      kink = gap > options.kink_abs_tol &&
             gap > options.kink_rel_tol * std::max(std::abs(numeric), std::abs(numeric_half));
      if (kink) {
        ++report.kink_coords;
      } else {
        report.smooth_max_rel_error = std::max(report.smooth_max_rel_error, err);
      }
    }
    x = saved;
    const double allowed =
        options.tolerance * std::max({std::abs(analytic), std::abs(numeric), 1e-12}) + options.abs_floor;
    if (!kink && std::abs(analytic - numeric) > allowed) ++report.violations;
    ++report.coords_checked;
    if (report.coords_checked == 1 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_param = pi;
      report.worst_index = i;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace cdnet
