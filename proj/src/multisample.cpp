#include "clustloc/multisample.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "clustloc/errors.hpp"
#include "clustloc/parallel.hpp"

namespace clustloc {

namespace {

// n * D_B, n * D_C and lambda for a labeling, from per-group and per-cluster
// weight sums. X0 has rows x_i - lambda.
DesignLimits limits_for(const Design& design, const Vector& w, std::span<const int> groups,
                        std::size_t c) {
  const double n = static_cast<double>(design.n);
  const auto ci = static_cast<Eigen::Index>(c);
  Vector lambda = Vector::Zero(ci);
  Vector q = Vector::Zero(ci);
  for (std::size_t i = 0; i < design.n; ++i) {
    const double wi = w[static_cast<Eigen::Index>(i)];
    lambda[groups[i]] += wi;
    q[groups[i]] += wi * wi;
  }
  lambda /= n;
  const double qsum = q.sum();
  Matrix nb = Matrix(q.asDiagonal()) - lambda * q.transpose() - q * lambda.transpose() +
              qsum * lambda * lambda.transpose();

  Matrix within = Matrix::Zero(ci, ci);
  Vector u(ci);
  for (const auto& rows : design.members) {
    u.setZero();
    double total = 0.0;
    for (std::size_t i : rows) {
      const double wi = w[static_cast<Eigen::Index>(i)];
      u[groups[i]] += wi;
      total += wi;
    }
    u -= total * lambda;
    within.noalias() += u * u.transpose();
  }
  DesignLimits out;
  out.D_B = nb / n;
  out.D_C = (within - nb) / n;
  out.lambda = lambda;
  return out;
}

void check_groups(const Design& design, const char* who) {
  if (!design.has_groups() || design.c < 2)
    fail(ErrorCode::InvalidArgument, std::string(who) + ": at least two groups are required");
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index s = 0; s < a.cols(); ++s)
      out.block(r * b.rows(), s * b.cols(), b.rows(), b.cols()) = a(r, s) * b;
  return out;
}

Matrix rows_of(const Matrix& y, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), y.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = y.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

std::vector<std::vector<std::size_t>> group_rows(const Design& design) {
  std::vector<std::vector<std::size_t>> rows(design.c);
  for (std::size_t i = 0; i < design.n; ++i) rows[static_cast<std::size_t>(design.group[i])].push_back(i);
  return rows;
}

Vector weights_of(const WeightVector& w, const std::vector<std::size_t>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = w[rows[r]];
  return out;
}

}  // namespace

DesignLimits design_limits(const Design& design, const WeightVector& w) {
  check_groups(design, "design_limits");
  return limits_for(design, w.values(), design.group, design.c);
}

DesignLimits design_limits(const Design& design, const WeightVector& w, std::span<const int> groups) {
  check_groups(design, "design_limits");
  require(groups.size() == design.n, "design_limits: label count mismatch");
  return limits_for(design, w.values(), groups, design.c);
}

CSampleStatistic::CSampleStatistic(Matrix centered_scores, const Design& design, const WeightVector& w)
    : scores_(std::move(centered_scores)), design_(design), w_(w.values()) {
  check_groups(design, "c_sample_test");
  require(static_cast<std::size_t>(scores_.rows()) == design.n && w.size() == design.n,
          "c_sample_test: dimension mismatch");
  const BCEstimate bc = estimate_bc(scores_, design, w);
  b_hat_ = bc.B;
  c_hat_ = bc.C;
}

CSampleStatistic::Evaluation CSampleStatistic::evaluate(std::span<const int> groups) const {
  require(groups.size() == design_.n, "c_sample_test: label count mismatch");
  const Eigen::Index p = scores_.cols();
  const auto c = static_cast<Eigen::Index>(design_.c);
  const double n = static_cast<double>(design_.n);

  Matrix sums = Matrix::Zero(p, c);
  for (std::size_t i = 0; i < design_.n; ++i)
    sums.col(groups[i]) += w_[static_cast<Eigen::Index>(i)] * scores_.row(static_cast<Eigen::Index>(i)).transpose();
  const Eigen::Index h = c - 1;
  const Vector t = Eigen::Map<const Vector>(sums.data(), p * h) / std::sqrt(n);

  const DesignLimits lim = limits_for(design_, w_, groups, design_.c);
  Evaluation out;
  out.middle = kron(lim.D_B.topLeftCorner(h, h), b_hat_);
  if (design_.intra_pair_count > 0) out.middle += kron(lim.D_C.topLeftCorner(h, h), c_hat_);
  out.middle = 0.5 * (out.middle + out.middle.transpose());
  out.statistic = std::max(0.0, inverse_quadratic_form(out.middle, t, &out.rank_deficient));
  return out;
}

TestResult c_sample_test(const Matrix& y, const Design& design, const WeightVector& w,
                         ScoreKind kind) {
  check_groups(design, "c_sample_test");
  const CenteredScores centered = centered_scores(y, design, w, kind);
  const CSampleStatistic stat(centered.scores, design, w);
  const auto eval = stat.evaluate(design.group);
  TestResult out;
  out.statistic = eval.statistic;
  out.df = static_cast<int>(y.cols() * static_cast<Eigen::Index>(design.c - 1));
  out.p_asymptotic = chi2_tail(out.statistic, out.df);
  out.middle = eval.middle;
  out.rank_deficient = eval.rank_deficient;
  out.c_term_dropped = stat.c_term_dropped();
  out.weights_used = w.values();
  return out;
}

std::vector<double> permutation_statistics(const Matrix& y, const Design& design,
                                           const WeightVector& w, ScoreKind kind,
                                           const std::vector<std::vector<int>>& labelings) {
  const CSampleStatistic stat(centered_scores(y, design, w, kind).scores, design, w);
  std::vector<double> out;
  out.reserve(labelings.size());
  for (const auto& g : labelings) out.push_back(stat.statistic(g));
  return out;
}

double permutation_pvalue(const Matrix& y, const Design& design, const WeightVector& w,
                          ScoreKind kind, PermutationScheme scheme, RandomStream& stream,
                          const PermutationOptions& options) {
  check_groups(design, "permutation_pvalue");
  check_scheme(design, scheme);
  if (options.reps == 0) return 1.0;
  // Pooled scores depend on the responses and weights only, so relabeling
  // changes T-tilde, X0 and the middle matrix but not T-hat.
  const CSampleStatistic stat(centered_scores(y, design, w, kind).scores, design, w);
  const double observed = stat.statistic(design.group);
  const double threshold = observed - 1e-10 * std::max(1.0, std::abs(observed));

  constexpr std::size_t kBatch = 4096;
  std::size_t exceed = 0;
  for (std::size_t done = 0; done < options.reps; done += kBatch) {
    const std::size_t count = std::min(kBatch, options.reps - done);
    const auto batch = permutations(design, scheme, count, stream);
    std::atomic<std::size_t> hits{0};
    parallel_chunks(count, options.threads, [&](std::size_t begin, std::size_t end, unsigned) {
      std::size_t local = 0;
      for (std::size_t r = begin; r < end; ++r)
        if (stat.statistic(batch[r]) >= threshold) ++local;
      hits += local;
    });
    exceed += hits;
  }
  return (1.0 + static_cast<double>(exceed)) / (static_cast<double>(options.reps) + 1.0);
}

bool GroupCenters::ok() const {
  return std::none_of(errors.begin(), errors.end(), [](const auto& e) { return e.has_value(); });
}

GroupCenters group_centers(const Matrix& y, const Design& design, const WeightVector& w,
                           ScoreKind kind) {
  check_groups(design, "group_centers");
  require(static_cast<std::size_t>(y.rows()) == design.n && w.size() == design.n,
          "group_centers: dimension mismatch");
  const auto rows = group_rows(design);
  GroupCenters out;
  out.beta = Matrix::Zero(static_cast<Eigen::Index>(design.c), y.cols());
  out.iterations.assign(design.c, 0);
  out.errors.assign(design.c, std::nullopt);
  for (std::size_t g = 0; g < design.c; ++g) {
    const Matrix yg = rows_of(y, rows[g]);
    const Vector wg = weights_of(w, rows[g]);
    try {
      if (kind == ScoreKind::Identity) {
        out.beta.row(static_cast<Eigen::Index>(g)) = (yg.transpose() * wg / wg.sum()).transpose();
        continue;
      }
      if (yg.rows() == 1) {
        out.beta.row(static_cast<Eigen::Index>(g)) = yg.row(0);
        continue;
      }
      const double ng = static_cast<double>(yg.rows());
      L1Solution sol;
      if (kind == ScoreKind::Sign) {
        L1SolverOptions opts;
        opts.relative_tolerance = 1e-8 / ng;
        sol = weighted_spatial_median(yg, wg, opts);
      } else {
        // Rank scores have no one-sample location; the companion center is
        // the one-sample Hodges-Lehmann estimate.
        sol = hodges_lehmann_one_sample(yg, WeightVector(wg));
      }
      if (!sol.converged) fail(ErrorCode::EstimationFailure, "solver did not converge");
      out.beta.row(static_cast<Eigen::Index>(g)) = sol.location.transpose();
      out.iterations[g] = sol.iterations;
    } catch (const std::exception& e) {
      out.errors[g] = e.what();
    }
  }
  return out;
}

L1Solution hodges_lehmann_two_sample(const Matrix& y, const Design& design, const WeightVector& w,
                                     std::size_t i, std::size_t j, double tolerance, int max_iter) {
  check_groups(design, "hodges_lehmann_two_sample");
  require(i < design.c && j < design.c && i != j, "hodges_lehmann_two_sample: bad group pair");
  const auto rows = group_rows(design);
  const auto& ri = rows[i];
  const auto& rj = rows[j];
  const auto pairs = static_cast<Eigen::Index>(ri.size() * rj.size());
  Matrix diffs(pairs, y.cols());
  Vector weights(pairs);
  Eigen::Index at = 0;
  for (std::size_t b : rj)
    for (std::size_t a : ri) {
      diffs.row(at) = y.row(static_cast<Eigen::Index>(b)) - y.row(static_cast<Eigen::Index>(a));
      weights[at++] = w[a] * w[b];
    }
  L1SolverOptions opts;
  opts.relative_tolerance = tolerance / static_cast<double>(design.n);
  opts.max_iter = max_iter;
  return weighted_spatial_median(diffs, weights, opts);
}

std::pair<double, double> gamma_constants(const Design& design, const WeightVector& w,
                                          std::size_t i, std::size_t j) {
  check_groups(design, "gamma_constants");
  require(i < design.c && j < design.c && i != j, "gamma_constants: bad group pair");
  const double n = static_cast<double>(design.n);
  const double ni = static_cast<double>(design.group_sizes[i]);
  const double nj = static_cast<double>(design.group_sizes[j]);
  // x'W^2x, x'WZZ'Wx per group and the cross term x_i'WZZ'Wx_j.
  double sq_i = 0.0, sq_j = 0.0, zz_i = 0.0, zz_j = 0.0, zz_ij = 0.0;
  for (const auto& members : design.members) {
    double si = 0.0, sj = 0.0;
    for (std::size_t r : members) {
      const auto g = static_cast<std::size_t>(design.group[r]);
      if (g == i) {
        si += w[r];
        sq_i += w[r] * w[r];
      } else if (g == j) {
        sj += w[r];
        sq_j += w[r] * w[r];
      }
    }
    zz_i += si * si;
    zz_j += sj * sj;
    zz_ij += si * sj;
  }
  const double gamma_b = n / (ni * ni) * sq_i + n / (nj * nj) * sq_j;
  const double gamma_c = n / (ni * ni) * (zz_i - sq_i) + n / (nj * nj) * (zz_j - sq_j) -
                         2.0 * n / (ni * nj) * zz_ij;
  return {gamma_b, gamma_c};
}

namespace {

struct PairContext {
  Matrix scores;  // n x p residual scores
  Matrix a_hat;
  Vector theta;   // mu_j - mu_i, i < j
};

PairContext pair_context(const Matrix& y, const Design& design, const WeightVector& w,
                         ScoreKind kind, std::size_t i, std::size_t j) {
  const Eigen::Index p = y.cols();
  PairContext ctx;
  if (kind == ScoreKind::Rank) {
    PairShifts shifts;
    shifts.c = design.c;
    shifts.values.assign(design.c * design.c, Vector::Zero(p));
    for (std::size_t r = 0; r < design.c; ++r)
      for (std::size_t s = r + 1; s < design.c; ++s) {
        const L1Solution sol = hodges_lehmann_two_sample(y, design, w, r, s);
        if (!sol.converged)
          throw EstimationFailure("pairwise_difference: two-sample Hodges-Lehmann did not converge",
                                  sol.trace,
                                  {sol.location.data(), sol.location.data() + sol.location.size()});
        shifts.values[s * design.c + r] = sol.location;
        shifts.values[r * design.c + s] = -sol.location;
      }
    ctx.theta = shifts(j, i);
    Matrix aligned = y;
    for (std::size_t k = 0; k < design.n; ++k)
      aligned.row(static_cast<Eigen::Index>(k)) -=
          shifts(static_cast<std::size_t>(design.group[k]), i).transpose();
    ctx.scores = spatial_ranks(aligned, &w);
    ctx.a_hat = a_hat(y, design, kind, &shifts);
    return ctx;
  }
  require(kind != ScoreKind::SignedRank,
          "pairwise_difference: use identity, sign or rank scores for group differences");
  const GroupCenters centers = group_centers(y, design, w, kind);
  for (std::size_t g = 0; g < design.c; ++g)
    if (centers.errors[g])
      fail(ErrorCode::EstimationFailure,
           "pairwise_difference: group " + std::to_string(g) + ": " + *centers.errors[g]);
  ctx.theta = (centers.beta.row(static_cast<Eigen::Index>(j)) -
               centers.beta.row(static_cast<Eigen::Index>(i))).transpose();
  Matrix residuals = y;
  for (std::size_t k = 0; k < design.n; ++k)
    residuals.row(static_cast<Eigen::Index>(k)) -= centers.beta.row(design.group[k]);
  ctx.scores = kind == ScoreKind::Identity ? residuals : spatial_signs(residuals);
  ctx.a_hat = a_hat(residuals, design, kind);
  return ctx;
}

}  // namespace

PairwiseDifference pairwise_difference(const Matrix& y, const Design& design, const WeightVector& w,
                                       ScoreKind kind, std::size_t i, std::size_t j) {
  check_groups(design, "pairwise_difference");
  require(i < design.c && j < design.c && i != j, "pairwise_difference: bad group pair");
  require(static_cast<std::size_t>(y.rows()) == design.n && w.size() == design.n,
          "pairwise_difference: dimension mismatch");
  if (i > j) {
    // Computed once for the ordered pair so that theta_ij = -theta_ji exactly.
    PairwiseDifference out = pairwise_difference(y, design, w, kind, j, i);
    std::swap(out.i, out.j);
    out.theta = -out.theta;
    return out;
  }
  const PairContext ctx = pair_context(y, design, w, kind, i, j);
  const double n = static_cast<double>(design.n);
  const BCEstimate bc = estimate_bc(ctx.scores, design, w);

  PairwiseDifference out;
  out.i = i;
  out.j = j;
  out.theta = ctx.theta;
  out.a_hat = ctx.a_hat;
  std::tie(out.gamma_B, out.gamma_C) = gamma_constants(design, w, i, j);
  if (design.intra_pair_count == 0) out.gamma_C = 0.0;

  const Matrix a_inv = ctx.a_hat.completeOrthogonalDecomposition().pseudoInverse();
  Matrix middle = out.gamma_B * bc.B;
  if (design.intra_pair_count > 0) middle += out.gamma_C * bc.C;
  out.covariance = a_inv * middle * a_inv.transpose() / n;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());

  // Alternative: cluster sums of w*_ij T over the two samples only.
  const double ni = static_cast<double>(design.group_sizes[i]);
  const double nj = static_cast<double>(design.group_sizes[j]);
  const Eigen::Index p = ctx.scores.cols();
  Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(design.d), p);
  Vector trace_b = Vector::Zero(static_cast<Eigen::Index>(design.c));
  for (std::size_t k = 0; k < design.n; ++k) {
    const auto g = static_cast<std::size_t>(design.group[k]);
    const auto row = ctx.scores.row(static_cast<Eigen::Index>(k));
    trace_b[static_cast<Eigen::Index>(g)] += row.squaredNorm();
    double coef = 0.0;
    if (g == j) coef = w[k] / nj;
    else if (g == i) coef = -w[k] / ni;
    if (coef != 0.0) sums.row(design.cluster[k]) += coef * row;
  }
  out.covariance_alt = a_inv * (sums.transpose() * sums) * a_inv.transpose();
  out.covariance_alt = 0.5 * (out.covariance_alt + out.covariance_alt.transpose());

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t g = 0; g < design.c; ++g) {
    const double t = trace_b[static_cast<Eigen::Index>(g)] / static_cast<double>(design.group_sizes[g]);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  out.alt_preferred = lo > 0.0 ? hi / lo > 2.0 : hi > 0.0;
  return out;
}

GroupEstimates estimate_groups(const Matrix& y, const Design& design, const WeightVector& w,
                               ScoreKind kind) {
  GroupEstimates out;
  const GroupCenters centers = group_centers(y, design, w, kind);
  out.beta = centers.beta;
  for (std::size_t i = 0; i < design.c; ++i)
    for (std::size_t j = i + 1; j < design.c; ++j)
      out.pairs.push_back(pairwise_difference(y, design, w, kind, i, j));
  return out;
}

}  // namespace clustloc
