#include "clustloc/onesample.hpp"

#include <atomic>
#include <cmath>

#include "clustloc/errors.hpp"
#include "clustloc/parallel.hpp"

namespace clustloc {

Matrix cluster_sums(const Matrix& scores, const Design& design, const WeightVector& w) {
  require(static_cast<std::size_t>(scores.rows()) == design.n && w.size() == design.n,
          "cluster_sums: dimension mismatch");
  Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(design.d), scores.cols());
  for (std::size_t i = 0; i < design.n; ++i)
    sums.row(design.cluster[i]) += w[i] * scores.row(static_cast<Eigen::Index>(i));
  return sums;
}

TestResult one_sample_test(const Matrix& y, const Design& design, const WeightVector& w,
                           ScoreKind kind) {
  require(is_odd(kind), "one_sample_test: score kind must be odd");
  require(static_cast<std::size_t>(y.rows()) == design.n, "one_sample_test: dimension mismatch");
  const Matrix scores = raw_scores(y, kind);
  const Matrix sums = cluster_sums(scores, design, w);
  const double n = static_cast<double>(design.n);
  const Vector total = sums.colwise().sum().transpose() / std::sqrt(n);

  TestResult out;
  out.df = static_cast<int>(y.cols());
  out.middle = sums.transpose() * sums / n;
  out.statistic = std::max(0.0, inverse_quadratic_form(out.middle, total, &out.rank_deficient));
  out.p_asymptotic = chi2_tail(out.statistic, out.df);
  out.weights_used = w.values();
  return out;
}

double sign_change_pvalue(const Matrix& y, const Design& design, const WeightVector& w,
                          ScoreKind kind, RandomStream& stream, const SignChangeOptions& options) {
  require(is_odd(kind), "sign_change_pvalue: score kind must be odd");
  const Matrix sums = cluster_sums(raw_scores(y, kind), design, w);
  // The middle matrix is invariant under cluster sign changes: factor once.
  const PsdInverse middle_inv = invert_psd(sums.transpose() * sums);
  auto statistic = [&](const Vector& total) { return total.dot(middle_inv.inverse * total); };
  const Vector observed_total = sums.colwise().sum().transpose();
  const double observed = statistic(observed_total);
  const double threshold = observed - 1e-10 * std::max(1.0, std::abs(observed));

  std::vector<SignVector> flips;
  if (options.exhaustive) {
    flips = all_sign_flips(design);
  } else {
    if (options.reps == 0) return 1.0;
    flips = sign_flips(design, options.reps, stream);
  }

  std::atomic<std::size_t> exceed{0};
  parallel_chunks(flips.size(), options.threads, [&](std::size_t begin, std::size_t end, unsigned) {
    std::size_t local = 0;
    Vector total(sums.cols());
    for (std::size_t r = begin; r < end; ++r) {
      total.setZero();
      for (std::size_t k = 0; k < design.d; ++k)
        total += static_cast<double>(flips[r][k]) * sums.row(static_cast<Eigen::Index>(k)).transpose();
      if (statistic(total) >= threshold) ++local;
    }
    exceed += local;
  });

  if (options.exhaustive) return static_cast<double>(exceed) / static_cast<double>(flips.size());
  return (1.0 + static_cast<double>(exceed)) / (static_cast<double>(flips.size()) + 1.0);
}

LocationEstimate estimate_location(const Matrix& y, const Design& design, const WeightVector& w,
                                   ScoreKind kind, const LocationOptions& options) {
  require(kind != ScoreKind::Rank, "estimate_location: rank scores have no one-sample estimate");
  require(static_cast<std::size_t>(y.rows()) == design.n && w.size() == design.n,
          "estimate_location: dimension mismatch");
  const double n = static_cast<double>(design.n);
  LocationEstimate out;

  auto raise = [](const char* what, const L1Solution& sol) {
    throw EstimationFailure(what, sol.trace,
                            {sol.location.data(), sol.location.data() + sol.location.size()});
  };

  Matrix scores;
  switch (kind) {
    case ScoreKind::Identity:
      out.mu_hat = y.transpose() * w.values() / n;
      out.converged = true;
      scores = y.rowwise() - out.mu_hat.transpose();
      break;
    case ScoreKind::Sign: {
      L1SolverOptions opts;
      opts.relative_tolerance = options.tolerance / n;
      opts.max_iter = options.max_iter;
      const L1Solution sol = weighted_spatial_median(y, w.values(), opts, options.init);
      if (!sol.converged) raise("estimate_location: spatial median did not converge", sol);
      out.mu_hat = sol.location;
      out.iterations = sol.iterations;
      out.converged = true;
      scores = spatial_signs(y.rowwise() - out.mu_hat.transpose());
      break;
    }
    case ScoreKind::SignedRank: {
      const L1Solution sol =
          hodges_lehmann_one_sample(y, w, options.tolerance, options.max_iter, options.init);
      if (!sol.converged) raise("estimate_location: Hodges-Lehmann solve did not converge", sol);
      out.mu_hat = sol.location;
      out.iterations = sol.iterations;
      out.converged = true;
      scores = spatial_signed_ranks(y.rowwise() - out.mu_hat.transpose(), &w);
      break;
    }
    case ScoreKind::Rank:
      break;
  }
  out.residual = (scores.transpose() * w.values()).norm();

  const Matrix residuals = y.rowwise() - out.mu_hat.transpose();
  out.a_hat = a_hat(residuals, design, kind);
  // a_hat averages A((e_i + e_j) / 2), the derivative of the Walsh-average
  // equation; the signed-rank scores Q move at half that rate.
  if (kind == ScoreKind::SignedRank) out.a_hat *= 0.5;
  out.degraded = reciprocal_condition(out.a_hat) < 1e-10;

  const Matrix sums = cluster_sums(scores, design, w);
  const Matrix middle = sums.transpose() * sums / n;
  const Matrix a_inv = out.a_hat.completeOrthogonalDecomposition().pseudoInverse();
  out.covariance = a_inv * middle * a_inv.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

BCEstimate estimate_bc(const Matrix& scores, const Design& design, const WeightVector& w) {
  require(static_cast<std::size_t>(scores.rows()) == design.n && w.size() == design.n,
          "estimate_bc: dimension mismatch");
  const double n = static_cast<double>(design.n);
  BCEstimate out;
  out.B = scores.transpose() * scores / n;

  const Matrix sums = cluster_sums(scores, design, WeightVector::unit(design.n));
  const Eigen::Index p = scores.cols();
  if (design.intra_pair_count == 0) {
    out.C = Matrix::Zero(p, p);
    out.c_empty = true;
  } else {
    out.C = (sums.transpose() * sums - scores.transpose() * scores) /
            static_cast<double>(design.intra_pair_count);
  }

  const Vector& wv = w.values();
  out.D_B = wv.squaredNorm() / n;
  double within = 0.0;
  for (const auto& rows : design.members) {
    double s = 0.0;
    for (std::size_t i : rows) s += wv[static_cast<Eigen::Index>(i)];
    within += s * s;
  }
  out.D_C = (within - wv.squaredNorm()) / n;
  return out;
}

}  // namespace clustloc
