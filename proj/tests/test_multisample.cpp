#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clustloc/errors.hpp"
#include "clustloc/multisample.hpp"
#include "oracles.hpp"

using namespace clustloc;

namespace {

struct Sample {
  Matrix y;
  Design design;
};

// d clusters of random size 1..4, labels drawn per unit from c groups (every
// group present), cluster effect with correlation rho.
Sample grouped_sample(RandomStream& rs, int d, int p, int c, double rho = 0.3,
                      double max_size = 4) {
  std::vector<int> clusters, groups;
  std::vector<Vector> rows;
  for (int k = 0; k < d; ++k) {
    const int m = 1 + int(rs.below(std::uint64_t(max_size)));
    Vector b(p);
    for (int j = 0; j < p; ++j) b[j] = std::sqrt(rho) * rs.normal();
    for (int u = 0; u < m; ++u) {
      Vector e(p);
      for (int j = 0; j < p; ++j) e[j] = b[j] + std::sqrt(1 - rho) * rs.normal();
      rows.push_back(e);
      clusters.push_back(k);
      groups.push_back(int(rs.below(std::uint64_t(c))));
    }
  }
  for (int g = 0; g < c; ++g) groups[std::size_t(g)] = g;
  Matrix y(Eigen::Index(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) y.row(Eigen::Index(i)) = rows[i];
  return {y, build_design(clusters, groups)};
}

WeightVector cluster_weights(const Design& d, RandomStream& rs) {
  std::vector<double> per(d.d);
  for (auto& v : per) v = 0.3 + rs.uniform();
  Vector raw(d.n);
  for (std::size_t i = 0; i < d.n; ++i) raw[i] = per[d.cluster[i]];
  return WeightVector(raw);
}

// Moves group `g` to the last code so H drops a different group.
std::vector<int> rotate_last(const std::vector<int>& groups, int g, int c) {
  std::vector<int> out(groups);
  for (auto& v : out) {
    if (v == g) v = c - 1;
    else if (v == c - 1) v = g;
  }
  return out;
}

// Split design: d clusters of size 2 with one unit in each group.
Sample split_sample(RandomStream& rs, int d, int p, double shift) {
  std::vector<int> clusters, groups;
  Matrix y(2 * d, p);
  for (int k = 0; k < d; ++k)
    for (int u = 0; u < 2; ++u) {
      const int i = 2 * k + u;
      for (int j = 0; j < p; ++j) y(i, j) = rs.normal() + (u == 1 ? shift : 0.0);
      clusters.push_back(k);
      groups.push_back(u);
    }
  return {y, build_design(clusters, groups)};
}

std::vector<std::vector<int>> all_split_labelings(const Design& d) {
  std::vector<std::vector<int>> out;
  for (std::size_t code = 0; code < (std::size_t{1} << d.d); ++code) {
    std::vector<int> g = d.group;
    for (std::size_t k = 0; k < d.d; ++k)
      if ((code >> k) & 1u)
        for (std::size_t i : d.members[k]) g[i] = 1 - g[i];
    out.push_back(g);
  }
  return out;
}

}  // namespace

TEST_CASE("design limits examples and dense oracle") {
  const Design singles = build_design(std::vector<int>{0, 1, 2, 3}, std::vector<int>{0, 1, 0, 1});
  const DesignLimits a = design_limits(singles, WeightVector::unit(4));
  CHECK(a.D_C.norm() < 1e-15);
  CHECK(a.lambda.isApprox(Vector{{0.5, 0.5}}));

  RandomStream rs(51, 0);
  const Sample s = grouped_sample(rs, 10, 2, 3);
  const WeightVector w = cluster_weights(s.design, rs);
  const DesignLimits lim = design_limits(s.design, w);
  const Eigen::Index n = Eigen::Index(s.design.n);
  Matrix x = Matrix::Zero(n, 3), z = Matrix::Zero(n, Eigen::Index(s.design.d));
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, s.design.group[i]) = 1.0;
    z(i, s.design.cluster[i]) = 1.0;
  }
  const Matrix W = w.values().asDiagonal();
  const Matrix x0 = x - Matrix::Ones(n, n) * W * x / double(n);
  const Matrix J = z * z.transpose() - Matrix::Identity(n, n);
  CHECK((lim.D_B - x0.transpose() * W * W * x0 / double(n)).norm() < 1e-12);
  CHECK((lim.D_C - x0.transpose() * W * J * W * x0 / double(n)).norm() < 1e-12);
  CHECK((lim.lambda - x.transpose() * w.values() / double(n)).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(lim.D_B);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  CHECK(lim.lambda.minCoeff() > 0.0);
  CHECK(lim.lambda.maxCoeff() < 1.0);
}

TEST_CASE("c-sample Q2 against the dense-matrix oracle") {
  RandomStream rs(52, 0);
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::Rank, ScoreKind::SignedRank}) {
    for (int rep = 0; rep < 3; ++rep) {
      const Sample s = grouped_sample(rs, 12, 2 + rep % 2, 3);
      const WeightVector w = cluster_weights(s.design, rs);
      const TestResult r = c_sample_test(s.y, s.design, w, kind);
      const Matrix t = centered_scores(s.y, s.design, w, kind).scores;
      CHECK(r.df == int(s.y.cols()) * 2);
      CHECK(r.statistic == doctest::Approx(oracle::dense_c_sample(t, s.design, w.values())).epsilon(1e-9));
      CHECK(r.p_asymptotic >= 0.0);
      CHECK(r.p_asymptotic <= 1.0);
    }
  }
}

TEST_CASE("two-sample identity Q2 is a function of Hotelling T2") {
  RandomStream rs(53, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 40, p = 3;
    Matrix y(n, p);
    std::vector<int> clusters(n), groups(n);
    for (int i = 0; i < n; ++i) {
      clusters[i] = i;
      groups[i] = i < 17 ? 0 : 1;
      for (int j = 0; j < p; ++j) y(i, j) = rs.normal() * (1 + j) + (groups[i] ? 0.3 : 0.0);
    }
    const Design d = build_design(clusters, groups);
    const double q = c_sample_test(y, d, WeightVector::unit(n), ScoreKind::Identity).statistic;
    // classical T2 with the pooled within-group covariance
    const Matrix y1 = y.topRows(17), y2 = y.bottomRows(23);
    const Vector m1 = y1.colwise().mean(), m2 = y2.colwise().mean();
    const Matrix c1 = y1.rowwise() - m1.transpose(), c2 = y2.rowwise() - m2.transpose();
    const Matrix s = (c1.transpose() * c1 + c2.transpose() * c2) / double(n - 2);
    const double t2 = 17.0 * 23.0 / n * (m1 - m2).dot(s.inverse() * (m1 - m2));
    CHECK(q == doctest::Approx(n * t2 / (n - 2 + t2)).epsilon(1e-10));
  }
}

TEST_CASE("two-sample identity Q2 near Hotelling T2 on a fixed dataset") {
  // 40 points on a fixed lattice-like pattern; group 2 shifted slightly
  Matrix y(40, 2);
  std::vector<int> clusters(40), groups(40);
  for (int i = 0; i < 40; ++i) {
    clusters[i] = i;
    groups[i] = i % 2;
    y(i, 0) = std::sin(1.3 * i) + 0.2 * groups[i];
    y(i, 1) = std::cos(0.7 * i * i) - 0.1 * groups[i];
  }
  const Design d = build_design(clusters, groups);
  const double q = c_sample_test(y, d, WeightVector::unit(40), ScoreKind::Identity).statistic;
  Matrix s = Matrix::Zero(2, 2);
  Vector m[2] = {Vector::Zero(2), Vector::Zero(2)};
  for (int i = 0; i < 40; ++i) m[groups[i]] += y.row(i).transpose() / 20.0;
  for (int i = 0; i < 40; ++i) {
    const Vector r = y.row(i).transpose() - m[groups[i]];
    s += r * r.transpose() / 38.0;
  }
  const double t2 = 10.0 * (m[0] - m[1]).dot(s.inverse() * (m[0] - m[1]));
  CHECK(q == doctest::Approx(t2).epsilon(0.05));
}

TEST_CASE("Q2 does not depend on the dropped group") {
  RandomStream rs(54, 0);
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::Rank}) {
    const Sample s = grouped_sample(rs, 15, 2, 4);
    const WeightVector w = cluster_weights(s.design, rs);
    const CSampleStatistic stat(centered_scores(s.y, s.design, w, kind).scores, s.design, w);
    const double base = stat.statistic(s.design.group);
    for (int g = 0; g < 3; ++g) {
      const double other = stat.statistic(rotate_last(s.design.group, g, 4));
      CHECK(std::abs(other - base) <= 1e-8 * std::max(1.0, base));
    }
  }
}

TEST_CASE("Q2 is invariant to cluster relabeling and row order") {
  RandomStream rs(55, 0);
  const Sample s = grouped_sample(rs, 12, 3, 2);
  const WeightVector w = cluster_weights(s.design, rs);
  const Eigen::Index n = s.y.rows();
  Matrix yr(n, 3);
  Vector wr(n);
  std::vector<int> cr(n), gr(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = std::size_t(n - 1 - i);
    yr.row(i) = s.y.row(Eigen::Index(src));
    wr[i] = w[src];
    cr[i] = 50 - s.design.cluster[src];
    gr[i] = s.design.group[src];
  }
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::Rank}) {
    const double q = c_sample_test(s.y, s.design, w, kind).statistic;
    const double qr = c_sample_test(yr, build_design(cr, gr), WeightVector(wr), kind).statistic;
    CHECK(qr == doctest::Approx(q).epsilon(1e-8));
  }
}

TEST_CASE("scheme B exhaustive permutation distribution is invariant") {
  RandomStream rs(56, 0);
  const Sample s = split_sample(rs, 6, 2, 0.5);
  const WeightVector w = WeightVector::unit(s.design.n);
  auto first = permutation_statistics(s.y, s.design, w, ScoreKind::Sign, all_split_labelings(s.design));
  // enumerate again from a different member of the same orbit
  RandomStream other(57, 0);
  const Design moved = with_groups(s.design, draw_permutation(s.design, PermutationScheme::B, other));
  auto second = permutation_statistics(s.y, moved, w, ScoreKind::Sign, all_split_labelings(moved));
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  REQUIRE(first.size() == second.size());
  for (std::size_t r = 0; r < first.size(); ++r)
    CHECK(first[r] == doctest::Approx(second[r]).epsilon(1e-12));
}

TEST_CASE("sampled scheme B p-value approaches the exhaustive one") {
  RandomStream rs(58, 0);
  const Sample s = split_sample(rs, 4, 2, 0.8);
  const WeightVector w = WeightVector::unit(s.design.n);
  const auto stats = permutation_statistics(s.y, s.design, w, ScoreKind::Sign, all_split_labelings(s.design));
  const double observed = c_sample_test(s.y, s.design, w, ScoreKind::Sign).statistic;
  double exact = 0.0;
  for (double q : stats) exact += q >= observed - 1e-10 * std::max(1.0, observed);
  exact /= double(stats.size());
  PermutationOptions opt;
  opt.reps = 20000;
  RandomStream a(9, 0);
  const double sampled = permutation_pvalue(s.y, s.design, w, ScoreKind::Sign, PermutationScheme::B, a, opt);
  CHECK(std::abs(sampled - exact) < 0.015);
  opt.reps = 0;
  CHECK(permutation_pvalue(s.y, s.design, w, ScoreKind::Sign, PermutationScheme::B, a, opt) == 1.0);

  opt.reps = 500;
  opt.threads = 3;
  RandomStream b(10, 0), c(10, 0);
  const double p1 = permutation_pvalue(s.y, s.design, w, ScoreKind::Rank, PermutationScheme::B, b, opt);
  opt.threads = 1;
  const double p2 = permutation_pvalue(s.y, s.design, w, ScoreKind::Rank, PermutationScheme::B, c, opt);
  CHECK(p1 == p2);
}

TEST_CASE("gamma constants against the dense form") {
  RandomStream rs(59, 0);
  const Sample s = grouped_sample(rs, 10, 2, 3);
  const WeightVector w = cluster_weights(s.design, rs);
  const Eigen::Index n = Eigen::Index(s.design.n);
  Matrix z = Matrix::Zero(n, Eigen::Index(s.design.d));
  for (Eigen::Index i = 0; i < n; ++i) z(i, s.design.cluster[i]) = 1.0;
  const Matrix W = w.values().asDiagonal();
  const Matrix J = z * z.transpose() - Matrix::Identity(n, n);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      Vector v = Vector::Zero(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        if (std::size_t(s.design.group[k]) == j) v[k] = 1.0 / double(s.design.group_sizes[j]);
        if (std::size_t(s.design.group[k]) == i) v[k] = -1.0 / double(s.design.group_sizes[i]);
      }
      const auto [gb, gc] = gamma_constants(s.design, w, i, j);
      CHECK(gb == doctest::Approx(double(n) * v.dot(W * W * v)).epsilon(1e-12));
      CHECK(gc == doctest::Approx(double(n) * v.dot(W * J * W * v)).epsilon(1e-12));
    }
}

TEST_CASE("pairwise differences are antisymmetric") {
  RandomStream rs(60, 0);
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::Rank}) {
    const Sample s = grouped_sample(rs, 15, 2, 3);
    const WeightVector w = cluster_weights(s.design, rs);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j) {
        const PairwiseDifference a = pairwise_difference(s.y, s.design, w, kind, i, j);
        const PairwiseDifference b = pairwise_difference(s.y, s.design, w, kind, j, i);
        CHECK((a.theta + b.theta).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.covariance == b.covariance);
        CHECK(b.i == j);
        CHECK((a.covariance - a.covariance.transpose()).norm() < 1e-15);
        Eigen::SelfAdjointEigenSolver<Matrix> es(a.covariance);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
      }
  }
  const Sample s = grouped_sample(rs, 10, 2, 2);
  CHECK_THROWS_AS(pairwise_difference(s.y, s.design, WeightVector::unit(s.design.n), ScoreKind::Sign, 0, 0), Error);
}

TEST_CASE("pairwise estimates match their definitions") {
  RandomStream rs(61, 0);
  const Sample s = grouped_sample(rs, 20, 2, 2);
  const WeightVector w = cluster_weights(s.design, rs);
  const PairwiseDifference mean = pairwise_difference(s.y, s.design, w, ScoreKind::Identity, 0, 1);
  Vector m0 = Vector::Zero(2), m1 = Vector::Zero(2);
  double w0 = 0, w1 = 0;
  for (std::size_t i = 0; i < s.design.n; ++i) {
    if (s.design.group[i] == 0) {
      m0 += w[i] * s.y.row(Eigen::Index(i)).transpose();
      w0 += w[i];
    } else {
      m1 += w[i] * s.y.row(Eigen::Index(i)).transpose();
      w1 += w[i];
    }
  }
  CHECK((mean.theta - (m1 / w1 - m0 / w0)).norm() < 1e-12);

  const L1Solution hl = hodges_lehmann_two_sample(s.y, s.design, w, 0, 1);
  CHECK(hl.converged);
  const PairwiseDifference rank = pairwise_difference(s.y, s.design, w, ScoreKind::Rank, 0, 1);
  CHECK((rank.theta - hl.location).norm() == 0.0);
  Matrix diffs(Eigen::Index(s.design.group_sizes[0] * s.design.group_sizes[1]), 2);
  Vector dw(diffs.rows());
  Eigen::Index at = 0;
  for (std::size_t b = 0; b < s.design.n; ++b)
    for (std::size_t a = 0; a < s.design.n; ++a)
      if (s.design.group[a] == 0 && s.design.group[b] == 1) {
        diffs.row(at) = s.y.row(Eigen::Index(b)) - s.y.row(Eigen::Index(a));
        dw[at++] = w[a] * w[b];
      }
  CHECK((hl.location - oracle::compass_median(diffs, dw, rs)).norm() < 1e-5);
}

TEST_CASE("Design B optimal weights leave Q2 unchanged") {
  RandomStream rs(62, 0);
  std::vector<int> clusters, groups;
  const int d = 30;
  for (int k = 0; k < d; ++k) {
    const int m = k % 2 ? 8 : 2;
    for (int u = 0; u < m; ++u) {
      clusters.push_back(k);
      groups.push_back(u < m / 2 ? 0 : 1);
    }
  }
  const Design design = build_design(clusters, groups);
  Matrix y(Eigen::Index(design.n), 3);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (int j = 0; j < 3; ++j) y(i, j) = rs.normal();
  const WeightVector opt = optimal_weights_two_sample(design, 0.4);
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::Rank}) {
    const double a = c_sample_test(y, design, WeightVector::unit(design.n), kind).statistic;
    const double b = c_sample_test(y, design, opt, kind).statistic;
    CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, a));
  }
}

TEST_CASE("both pairwise covariances agree under homogeneous variances") {
  RandomStream rs(63, 0);
  // a single d = 200 dataset has about 6% sampling spread in the ratio
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::Rank}) {
    double cov = 0.0, alt = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      const Sample s = grouped_sample(rs, 200, 2, 2, 0.3, 4);
      const WeightVector w = WeightVector::unit(s.design.n);
      const PairwiseDifference pd = pairwise_difference(s.y, s.design, w, kind, 0, 1);
      cov += pd.covariance.trace();
      alt += pd.covariance_alt.trace();
      CHECK_FALSE(pd.alt_preferred);
    }
    CHECK(std::abs(cov - alt) <= 0.1 * cov);
  }
}

TEST_CASE("group estimates cover every pair") {
  RandomStream rs(64, 0);
  const Sample s = grouped_sample(rs, 20, 2, 3);
  const GroupEstimates ge = estimate_groups(s.y, s.design, WeightVector::unit(s.design.n), ScoreKind::Sign);
  CHECK(ge.pairs.size() == 3);
  CHECK(ge.beta.rows() == 3);
  for (const auto& pd : ge.pairs)
    CHECK((pd.theta - (ge.beta.row(Eigen::Index(pd.j)) - ge.beta.row(Eigen::Index(pd.i))).transpose()).norm() < 1e-12);
  const GroupCenters gc = group_centers(s.y, s.design, WeightVector::unit(s.design.n), ScoreKind::Rank);
  CHECK(gc.ok());
}
