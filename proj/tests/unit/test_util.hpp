#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cdnet/gradcheck.hpp"
#include "cdnet/tensor.hpp"

namespace cdnet::testing {

inline constexpr double kGradTol = 1e-4;
inline constexpr int kGradSeeds = 20;
/// Absolute resolution of a central difference at h = 1e-5 on O(1)-O(10) objectives in
/// double: measured rounding noise peaks near 4e-10.
inline constexpr double kFdResolution = 1e-9;

template <typename T = double>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(d(rng));
  return t;
}

template <typename T = double>
Tensor<T> random_mask(Shape s, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution d(p);
  Tensor<T> t(s);
  for (auto& v : t.vec()) v = d(rng) ? T(1) : T(0);
  return t;
}

inline Parameter<double> random_param(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Parameter<double> p(s);
  p.value = random_tensor<double>(s, rng, lo, hi);
  return p;
}

/// sum(coeff * y): a generic scalar probe whose output gradient is `coeff`.
inline double probe(const Tensor<double>& y, const Tensor<double>& coeff) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * coeff[i];
  return s;
}

inline void expect_grad_ok(const GradCheckReport& r, double tol = kGradTol) {
  EXPECT_LE(r.max_rel_error, tol) << "param " << r.worst_param << " index " << r.worst_index
                                  << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric;
  EXPECT_GT(r.coords_checked, 0u);
}

/// Options for graphs with ReLU: flags coordinates whose difference quotient has not
/// converged at the step and allows the FD resolution floor on the rest.
inline GradCheckOptions converged_options(std::size_t max_coords = 0, std::uint64_t seed = 0) {
  GradCheckOptions o;
  o.max_coords = max_coords;
  o.seed = seed;
  o.detect_kinks = true;
  o.tolerance = kGradTol;
  o.abs_floor = kFdResolution;
  return o;
}

/// Every converged coordinate meets the pass rule and few coordinates are unconverged.
inline void expect_grad_converged(const GradCheckReport& r, double max_unconverged_fraction = 0.05) {
  EXPECT_EQ(r.violations, 0u) << "strict max " << r.max_rel_error << " at param " << r.worst_param << " index "
                              << r.worst_index << " analytic " << r.worst_analytic << " numeric "
                              << r.worst_numeric;
  EXPECT_LE(static_cast<double>(r.kink_coords), max_unconverged_fraction * static_cast<double>(r.coords_checked))
      << r.kink_coords << " of " << r.coords_checked << " coordinates unconverged";
  EXPECT_GT(r.coords_checked, 0u);
}

}  // namespace cdnet::testing
