#pragma once

// Exact dyadic conditional expectation on grid samples and the checks of
// its projection identities.

#include <cstdint>
#include <vector>

#include "phasespace/dyadic.hpp"
#include "phasespace/grid.hpp"

namespace phasespace {

/// Flat indices of grid points inside the half-open cube.
std::vector<std::int64_t> grid_points_in(const TorusGrid& grid, const DyadicCube& cube);

/// Grid mean of `f` over the points of `cube`.
Complex grid_average(const SampledField& f, const DyadicCube& cube);

/// g = sum_{I in P} 1_I avg_I(f); zero off the root.
SampledField cond_expectation(const SampledField& f, const DyadicPartition& partition);

struct BaselineCheck {
  SampledField g;
  double s_dyadic = 0.0;            // max over I in Sigma_P of |A_I f|
  double g_sup = 0.0;               // max |g|
  double max_inside_error = 0.0;    // max |A_I(f - g)| over I in Sigma_P
  double max_outside_error = 0.0;   // max |1_I g - A_I g| over I not in Sigma_P
  std::int64_t cubes_inside = 0;
  std::int64_t cubes_outside = 0;

  bool passed(double tol) const {
    return max_inside_error <= tol && max_outside_error <= tol && g_sup <= s_dyadic;
  }
};

/// Evaluates both projection identities over every dyadic cube inside the
/// root down to `extra_levels` below the finest cell, plus the sup bound.
BaselineCheck check_baseline(const SampledField& f, const DyadicPartition& partition, int extra_levels = 1);

}  // namespace phasespace
