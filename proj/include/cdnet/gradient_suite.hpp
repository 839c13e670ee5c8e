#pragma once

// Finite-difference verification of every differentiable primitive, block and the
// full tiny network, each over a range of random seeds.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace cdnet {

struct SuiteOptions {
  int seeds = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Absolute FD resolution used by the convergence-aware count only.
  double abs_floor = 1e-9;
  std::size_t network_coords = 50;
  bool include_network = true;
};

struct SuiteEntry {
  std::string name;
  int seeds = 0;
  std::size_t coords = 0;
  /// Largest relative error over all seeds and coordinates (the strict metric).
  double max_rel_error = 0.0;
  int worst_seed = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Coordinates whose difference quotient changes between step and step/2.
  std::size_t unconverged = 0;
  /// Converged coordinates breaking tolerance * |g| + abs_floor.
  std::size_t violations = 0;

  bool strict_pass(double tolerance) const { return max_rel_error <= tolerance; }
};

/// Runs the suite; `progress` (optional) is called after each entry.
std::vector<SuiteEntry> run_gradient_suite(const SuiteOptions& options = {},
                                           const std::function<void(const SuiteEntry&)>& progress = {});

}  // namespace cdnet
