#include "clustloc/weiszfeld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "clustloc/errors.hpp"

namespace clustloc {

Vector coordinatewise_weighted_median(const Matrix& points, const Vector& weights) {
  const Eigen::Index n = points.rows();
  require(n > 0 && weights.size() == n, "coordinatewise_weighted_median: dimension mismatch");
  const double half = 0.5 * weights.sum();
  Vector out(points.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return points(a, j) < points(b, j); });
    double acc = 0.0;
    out[j] = points(order.back(), j);
    for (Eigen::Index k : order) {
      acc += weights[k];
      if (acc >= half) {
        out[j] = points(k, j);
        break;
      }
    }
  }
  return out;
}

double l1_objective(const Matrix& points, const Vector& weights, const Vector& mu) {
  return weights.dot((points.rowwise() - mu.transpose()).rowwise().norm());
}

namespace {

struct LocalState {
  Vector pull;           // sum over non-coincident points of v_k S(z_k - mu)
  Matrix hessian;        // sum v_k A(z_k - mu)
  double inv_dist_sum = 0.0;
  Vector weighted_pull;  // sum v_k z_k / d_k
  double coincident_weight = 0.0;
  double objective = 0.0;
};

LocalState evaluate(const Matrix& points, const Vector& weights, const Vector& mu, double eps,
                    bool want_hessian) {
  const Eigen::Index p = points.cols();
  LocalState s;
  s.pull = Vector::Zero(p);
  s.weighted_pull = Vector::Zero(p);
  if (want_hessian) s.hessian = Matrix::Zero(p, p);
  Vector diff(p);
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    const double v = weights[k];
    if (v == 0.0) continue;
    diff = points.row(k).transpose() - mu;
    const double dist = diff.norm();
    s.objective += v * dist;
    if (dist <= eps) {
      s.coincident_weight += v;
      continue;
    }
    const double inv = 1.0 / dist;
    s.pull.noalias() += (v * inv) * diff;
    s.inv_dist_sum += v * inv;
    s.weighted_pull.noalias() += (v * inv) * points.row(k).transpose();
    if (want_hessian) {
      const Vector u = diff * inv;
      s.hessian.noalias() += (v * inv) * (Matrix::Identity(p, p) - u * u.transpose());
    }
  }
  return s;
}

double subgradient_norm(const LocalState& s) {
  const double r = s.pull.norm();
  if (s.coincident_weight > 0.0) return std::max(0.0, r - s.coincident_weight);
  return r;
}

}  // namespace

L1Solution weighted_spatial_median(const Matrix& points, const Vector& weights,
                                   const L1SolverOptions& options,
                                   const std::optional<Vector>& init) {
  const Eigen::Index n = points.rows();
  const Eigen::Index p = points.cols();
  require(n > 0 && p > 0, "weighted_spatial_median: empty data");
  require(weights.size() == n, "weighted_spatial_median: weight count mismatch");
  require(points.allFinite() && weights.allFinite(), "weighted_spatial_median: non-finite input");
  require(weights.minCoeff() >= 0.0, "weighted_spatial_median: negative weight");
  const double total = weights.sum();
  require(total > 0.0, "weighted_spatial_median: zero total weight");

  Vector mu = init ? *init : coordinatewise_weighted_median(points, weights);
  require(mu.size() == p, "weighted_spatial_median: init has wrong dimension");

  double scale = 0.0;
  for (Eigen::Index k = 0; k < n; ++k)
    if (weights[k] > 0.0) scale = std::max(scale, (points.row(k).transpose() - mu).norm());
  Eigen::Index first = 0;
  while (weights[first] == 0.0) ++first;
  bool spread = false;
  for (Eigen::Index k = 0; k < n && !spread; ++k)
    if (weights[k] > 0.0 && (points.row(k) - points.row(first)).norm() > 1e-12 * std::max(scale, 1.0))
      spread = true;
  if (!spread) fail(ErrorCode::DegenerateInput, "weighted_spatial_median: data concentrated on one point");

  const double eps = 1e-12 * scale;
  const double target = options.relative_tolerance * total;

  L1Solution sol;
  LocalState s = evaluate(points, weights, mu, eps, true);
  for (int it = 0;; ++it) {
    const double g = subgradient_norm(s);
    sol.trace.push_back(g);
    sol.iterations = it;
    if (g <= target) {
      sol.converged = true;
      break;
    }
    if (it >= options.max_iter) break;

    Vector next;
    LocalState next_state;
    bool moved = false;
    if (s.coincident_weight > 0.0) {
      // Sitting on a data point that is not optimal: move along the pull.
      const Vector dir = s.pull / s.pull.norm();
      double step = (s.pull.norm() - s.coincident_weight) / s.inv_dist_sum;
      for (int half = 0; half < 60; ++half, step *= 0.5) {
        next = mu + step * dir;
        next_state = evaluate(points, weights, next, eps, true);
        if (next_state.objective < s.objective) {
          moved = true;
          break;
        }
      }
    } else {
      Eigen::LDLT<Matrix> ldlt(s.hessian);
      if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 1e-14 * s.hessian.trace()) {
        Vector step = ldlt.solve(s.pull);
        for (int half = 0; half < 30; ++half, step *= 0.5) {
          next = mu + step;
          next_state = evaluate(points, weights, next, eps, true);
          if (next_state.objective <= s.objective * (1.0 + 1e-15) &&
              subgradient_norm(next_state) < g) {
            moved = true;
            break;
          }
        }
      }
      if (!moved) {
        next = s.weighted_pull / s.inv_dist_sum;
        next_state = evaluate(points, weights, next, eps, true);
        moved = next_state.objective <= s.objective;
      }
    }
    // Iterates crawl toward an optimum sitting on a data point; when progress
    // stalls, try the nearest point directly.
    const bool stalled = !moved || subgradient_norm(next_state) > 0.5 * g;
    if (stalled && s.coincident_weight == 0.0) {
      Eigen::Index nearest = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < n; ++k) {
        if (weights[k] == 0.0) continue;
        const double dist = (points.row(k).transpose() - mu).norm();
        if (dist < best) {
          best = dist;
          nearest = k;
        }
      }
      const Vector candidate = points.row(nearest).transpose();
      LocalState cand_state = evaluate(points, weights, candidate, eps, true);
      if (cand_state.objective <= (moved ? next_state.objective : s.objective) &&
          subgradient_norm(cand_state) < g) {
        next = candidate;
        next_state = std::move(cand_state);
        moved = true;
      }
    }
    if (!moved) break;  // no further progress is representable
    mu = std::move(next);
    s = std::move(next_state);
  }
  sol.location = mu;
  sol.gradient_norm = sol.trace.back();
  sol.at_data_point = s.coincident_weight > 0.0;
  sol.objective = s.objective;
  return sol;
}

}  // namespace clustloc
