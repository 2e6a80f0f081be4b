#pragma once

#include <optional>
#include <vector>

#include "clustloc/numerics.hpp"

namespace clustloc {

struct L1SolverOptions {
  /// Stop when ||sum v_k S(z_k - mu)|| <= relative_tolerance * sum v_k.
  double relative_tolerance = 1e-10;
  int max_iter = 500;
};

struct L1Solution {
  Vector location;
  int iterations = 0;
  bool converged = false;
  bool at_data_point = false;  // optimum sits on one of the points
  double gradient_norm = 0.0;  // norm of the minimal subgradient
  double objective = 0.0;
  std::vector<double> trace;   // gradient norm per iteration
};

/// Minimizer of sum_k v_k ||z_k - mu||, the weighted spatial median of the
/// rows of `points`.
///
/// Starts at the coordinate-wise weighted median (or `init`). Each iteration
/// tries a Newton step on the smooth part, backtracking on the objective, and
/// falls back to a Weiszfeld step when Newton does not decrease it. An iterate
/// landing on a data point either certifies optimality there (subgradient test)
/// or moves off it along the descent direction with step halving.
/// When progress stalls, the nearest data point is tried as the next iterate.
/// Throws DegenerateInput when all weighted mass sits on one point.
L1Solution weighted_spatial_median(const Matrix& points, const Vector& weights,
                                   const L1SolverOptions& options = {},
                                   const std::optional<Vector>& init = std::nullopt);

/// Coordinate-wise weighted median (lower median on ties).
Vector coordinatewise_weighted_median(const Matrix& points, const Vector& weights);

/// sum_k v_k ||z_k - mu||
double l1_objective(const Matrix& points, const Vector& weights, const Vector& mu);

}  // namespace clustloc
