#include "clustloc/scores.hpp"

#include <cmath>

#include "clustloc/errors.hpp"

namespace clustloc {

const char* to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::Identity: return "identity";
    case ScoreKind::Sign: return "sign";
    case ScoreKind::Rank: return "rank";
    case ScoreKind::SignedRank: return "signed-rank";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& text) {
  if (text == "identity") return ScoreKind::Identity;
  if (text == "sign") return ScoreKind::Sign;
  if (text == "rank") return ScoreKind::Rank;
  if (text == "signed-rank") return ScoreKind::SignedRank;
  fail(ErrorCode::InvalidArgument, "unknown score kind '" + text + "'");
}

bool is_odd(ScoreKind kind) { return kind != ScoreKind::Rank; }

Vector spatial_sign(const Vector& y, double zero_tol) {
  const double norm = y.norm();
  if (!(norm > zero_tol)) return Vector::Zero(y.size());
  return y / norm;
}

namespace {

double zero_threshold(const Matrix& y) {
  return y.rows() == 0 ? 0.0 : 1e-12 * y.rowwise().norm().maxCoeff();
}

// Adds w * S(diff) to acc unless diff is below the zero threshold.
inline void add_sign(Eigen::Ref<Vector> acc, const Vector& diff, double weight, double tol) {
  const double norm = diff.norm();
  if (norm > tol) acc.noalias() += (weight / norm) * diff;
}

}  // namespace

Matrix spatial_signs(const Matrix& y) {
  const double tol = zero_threshold(y);
  Matrix out(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    out.row(i) = spatial_sign(y.row(i).transpose(), tol).transpose();
  return out;
}

Matrix spatial_ranks(const Matrix& y, const WeightVector* w) {
  const Eigen::Index n = y.rows();
  require(n >= 2, "spatial_ranks: need at least two observations");
  require(!w || static_cast<Eigen::Index>(w->size()) == n, "spatial_ranks: weight count mismatch");
  const double tol = 2.0 * zero_threshold(y);
  Matrix out = Matrix::Zero(n, y.cols());
  Vector diff(y.cols());
  // Each pair is evaluated once; S(y_j - y_i) = -S(y_i - y_j).
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      diff = y.row(i).transpose() - y.row(j).transpose();
      const double norm = diff.norm();
      if (!(norm > tol)) continue;
      diff /= norm;
      const double wi = w ? (*w)[static_cast<std::size_t>(i)] : 1.0;
      const double wj = w ? (*w)[static_cast<std::size_t>(j)] : 1.0;
      out.row(i) += wj * diff.transpose();
      out.row(j) -= wi * diff.transpose();
    }
  }
  return out / static_cast<double>(n);
}

Matrix spatial_signed_ranks(const Matrix& y, const WeightVector* w) {
  const Eigen::Index n = y.rows();
  require(n >= 2, "spatial_signed_ranks: need at least two observations");
  require(!w || static_cast<Eigen::Index>(w->size()) == n,
          "spatial_signed_ranks: weight count mismatch");
  const double tol = 2.0 * zero_threshold(y);
  Matrix out = Matrix::Zero(n, y.cols());
  Vector diff(y.cols()), sum(y.cols());
  auto weight = [&](Eigen::Index i) { return w ? (*w)[static_cast<std::size_t>(i)] : 1.0; };
  for (Eigen::Index i = 0; i < n; ++i) {
    // j == i: the difference vanishes, the sum is 2 y_i.
    sum = 2.0 * y.row(i).transpose();
    const double self = sum.norm();
    if (self > tol) out.row(i) += weight(i) * (sum / self).transpose();
    for (Eigen::Index j = i + 1; j < n; ++j) {
      diff = y.row(i).transpose() - y.row(j).transpose();
      sum = y.row(i).transpose() + y.row(j).transpose();
      const double nd = diff.norm();
      const double ns = sum.norm();
      if (nd > tol) {
        diff /= nd;
        out.row(i) += weight(j) * diff.transpose();
        out.row(j) -= weight(i) * diff.transpose();
      }
      if (ns > tol) {
        sum /= ns;
        out.row(i) += weight(j) * sum.transpose();
        out.row(j) += weight(i) * sum.transpose();
      }
    }
  }
  return out / (2.0 * static_cast<double>(n));
}

Matrix raw_scores(const Matrix& y, ScoreKind kind) {
  switch (kind) {
    case ScoreKind::Identity: return y;
    case ScoreKind::Sign: return spatial_signs(y);
    case ScoreKind::SignedRank: return spatial_signed_ranks(y);
    case ScoreKind::Rank: break;
  }
  fail(ErrorCode::InvalidArgument, "raw_scores: rank scores are not odd");
}

L1Solution hodges_lehmann_one_sample(const Matrix& y, const WeightVector& w, double tolerance,
                                     int max_iter, const std::optional<Vector>& init) {
  const Eigen::Index n = y.rows();
  require(n >= 1 && static_cast<Eigen::Index>(w.size()) == n,
          "hodges_lehmann_one_sample: dimension mismatch");
  const Eigen::Index pairs = n * (n + 1) / 2;
  Matrix walsh(pairs, y.cols());
  Vector pair_w(pairs);
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w[static_cast<std::size_t>(i)];
    walsh.row(at) = y.row(i);
    pair_w[at++] = wi * wi;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      walsh.row(at) = 0.5 * (y.row(i) + y.row(j));
      pair_w[at++] = 2.0 * wi * w[static_cast<std::size_t>(j)];
    }
  }
  // ||sum_i w_i Q_i|| = ||walsh gradient|| / (2n) and the pair weights sum to n^2.
  L1SolverOptions opts;
  opts.relative_tolerance = 2.0 * tolerance / static_cast<double>(n);
  opts.max_iter = max_iter;
  return weighted_spatial_median(walsh, pair_w, opts, init);
}

CenteredScores centered_scores(const Matrix& y, const Design& design, const WeightVector& w,
                               ScoreKind kind, const std::optional<Vector>& location,
                               const L1SolverOptions& solver) {
  const auto n = static_cast<Eigen::Index>(design.n);
  require(y.rows() == n && static_cast<Eigen::Index>(w.size()) == n,
          "centered_scores: dimension mismatch");
  CenteredScores out;
  switch (kind) {
    case ScoreKind::Identity: {
      const Vector mu = location ? *location : Vector(y.transpose() * w.values() / static_cast<double>(n));
      out.scores = y.rowwise() - mu.transpose();
      out.location = mu;
      break;
    }
    case ScoreKind::Sign: {
      Vector mu;
      if (location) {
        mu = *location;
      } else {
        L1Solution sol = weighted_spatial_median(y, w.values(), solver);
        if (!sol.converged)
          throw EstimationFailure("centered_scores: spatial median did not converge", sol.trace,
                                  {sol.location.data(), sol.location.data() + sol.location.size()});
        mu = sol.location;
      }
      const Matrix centered = y.rowwise() - mu.transpose();
      out.scores = spatial_signs(centered);
      if (!location) {
        // Rows sitting on a data-point optimum take the subgradient element
        // that balances the others (norm <= 1 at the optimum).
        double mass = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (centered.row(i).isZero(0.0)) mass += w[static_cast<std::size_t>(i)];
        if (mass > 0.0) {
          const Vector rest = out.scores.transpose() * w.values();
          for (Eigen::Index i = 0; i < n; ++i)
            if (centered.row(i).isZero(0.0)) out.scores.row(i) = -rest.transpose() / mass;
        }
      }
      out.location = mu;
      break;
    }
    case ScoreKind::Rank:
      out.scores = spatial_ranks(y, &w);
      break;
    case ScoreKind::SignedRank: {
      Vector mu;
      if (location) {
        mu = *location;
      } else {
        L1Solution sol = hodges_lehmann_one_sample(y, w, 1e-9, solver.max_iter);
        if (!sol.converged)
          throw EstimationFailure("centered_scores: Hodges-Lehmann solve did not converge", sol.trace,
                                  {sol.location.data(), sol.location.data() + sol.location.size()});
        mu = sol.location;
      }
      out.scores = spatial_signed_ranks(y.rowwise() - mu.transpose(), &w);
      out.location = mu;
      break;
    }
  }
  out.centering_residual = (out.scores.transpose() * w.values()).cwiseAbs().maxCoeff();
  return out;
}

Matrix a_matrix(const Vector& e) {
  const double norm = e.norm();
  const auto p = e.size();
  if (!(norm > 0.0)) return Matrix::Zero(p, p);
  const Vector u = e / norm;
  return (Matrix::Identity(p, p) - u * u.transpose()) / norm;
}

Matrix a_hat(const Matrix& residuals, const Design& design, ScoreKind kind,
             const PairShifts* shifts) {
  const Eigen::Index n = residuals.rows();
  const Eigen::Index p = residuals.cols();
  require(static_cast<std::size_t>(n) == design.n, "a_hat: dimension mismatch");
  if (kind == ScoreKind::Identity) return Matrix::Identity(p, p);

  const double tol = zero_threshold(residuals);
  Matrix acc = Matrix::Zero(p, p);
  std::size_t used = 0;
  auto accumulate = [&](const Vector& e) {
    if (e.norm() > tol) {
      acc += a_matrix(e);
      ++used;
    }
  };

  if (kind == ScoreKind::Sign) {
    for (Eigen::Index i = 0; i < n; ++i) accumulate(residuals.row(i).transpose());
  } else {
    const bool rank = kind == ScoreKind::Rank;
    const bool shifted = rank && shifts && design.has_groups();
    require(!shifted || shifts->c == design.c, "a_hat: shift table does not match the design");
    Vector e(p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ci = design.cluster[static_cast<std::size_t>(i)];
      for (Eigen::Index j = rank ? 0 : i + 1; j < n; ++j) {
        if (design.cluster[static_cast<std::size_t>(j)] == ci) continue;
        if (rank) {
          e = residuals.row(i).transpose() - residuals.row(j).transpose();
          if (shifted)
            e -= (*shifts)(static_cast<std::size_t>(design.group[static_cast<std::size_t>(i)]),
                           static_cast<std::size_t>(design.group[static_cast<std::size_t>(j)]));
        } else {
          e = 0.5 * (residuals.row(i).transpose() + residuals.row(j).transpose());
        }
        accumulate(e);
      }
    }
  }
  if (used == 0) fail(ErrorCode::DegenerateInput, "a_hat: every residual has zero norm");
  return acc / static_cast<double>(used);
}

}  // namespace clustloc
