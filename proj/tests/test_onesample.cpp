#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clustloc/errors.hpp"
#include "clustloc/onesample.hpp"
#include "clustloc/sim.hpp"
#include "oracles.hpp"

using namespace clustloc;

namespace {

struct Sample {
  Matrix y;
  Design design;
};

// d clusters of sizes 1..4 with a shared cluster effect.
Sample clustered_sample(RandomStream& rs, int d, int p, double shift = 0.0) {
  std::vector<int> clusters;
  std::vector<Vector> rows;
  for (int k = 0; k < d; ++k) {
    const int m = 1 + int(rs.below(4));
    Vector b(p);
    for (int j = 0; j < p; ++j) b[j] = 0.6 * rs.normal();
    for (int u = 0; u < m; ++u) {
      Vector e(p);
      for (int j = 0; j < p; ++j) e[j] = rs.normal() + b[j] + shift;
      rows.push_back(e);
      clusters.push_back(k);
    }
  }
  Matrix y(Eigen::Index(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) y.row(Eigen::Index(i)) = rows[i];
  return {y, build_design(clusters)};
}

WeightVector cluster_weights(const Design& d, RandomStream& rs) {
  std::vector<double> per(d.d);
  for (auto& v : per) v = 0.3 + rs.uniform();
  Vector raw(d.n);
  for (std::size_t i = 0; i < d.n; ++i) raw[i] = per[d.cluster[i]];
  return WeightVector(raw);
}

double dense_q2(const Matrix& t, const Design& d, const Vector& w) {
  const Eigen::Index n = Eigen::Index(d.n);
  Matrix z = Matrix::Zero(n, Eigen::Index(d.d));
  for (Eigen::Index i = 0; i < n; ++i) z(i, d.cluster[i]) = 1.0;
  const Matrix wt = w.asDiagonal() * t;
  const Vector total = wt.transpose() * Vector::Ones(n) / std::sqrt(double(n));
  const Matrix middle = wt.transpose() * z * z.transpose() * wt / double(n);
  return total.dot(middle.inverse() * total);
}

}  // namespace

TEST_CASE("one-sample Q2 against the dense formula") {
  RandomStream rs(41, 0);
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::SignedRank}) {
    for (int rep = 0; rep < 5; ++rep) {
      const Sample s = clustered_sample(rs, 12, 3, 0.2);
      const WeightVector w = cluster_weights(s.design, rs);
      const TestResult r = one_sample_test(s.y, s.design, w, kind);
      CHECK(r.df == 3);
      CHECK(r.statistic == doctest::Approx(dense_q2(raw_scores(s.y, kind), s.design, w.values())).epsilon(1e-10));
      CHECK(r.p_asymptotic == doctest::Approx(chi2_tail(r.statistic, 3)));
      CHECK(r.statistic >= 0.0);
      CHECK(r.p_asymptotic >= 0.0);
      CHECK(r.p_asymptotic <= 1.0);
    }
  }
  CHECK_THROWS_AS(one_sample_test(Matrix::Ones(3, 2), build_design(std::vector<int>{0, 1, 2}),
                                  WeightVector::unit(3), ScoreKind::Rank),
                  Error);
}

TEST_CASE("one-sample Q2 invariances") {
  RandomStream rs(42, 0);
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::SignedRank}) {
    const Sample s = clustered_sample(rs, 15, 2, 0.3);
    const WeightVector w = cluster_weights(s.design, rs);
    const double q = one_sample_test(s.y, s.design, w, kind).statistic;
    CHECK(one_sample_test(-s.y, s.design, w, kind).statistic == q);

    // relabel clusters and reverse the rows together
    const Eigen::Index n = s.y.rows();
    Matrix yr(n, s.y.cols());
    Vector wr(n);
    std::vector<int> cr(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      yr.row(i) = s.y.row(n - 1 - i);
      wr[i] = w[std::size_t(n - 1 - i)];
      cr[i] = 100 - s.design.cluster[std::size_t(n - 1 - i)];
    }
    const double qr = one_sample_test(yr, build_design(cr), WeightVector(wr), kind).statistic;
    CHECK(qr == doctest::Approx(q).epsilon(1e-10));
  }
}

TEST_CASE("exhaustive sign-change p-value against direct enumeration") {
  RandomStream rs(43, 0);
  for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::SignedRank}) {
    const Sample s = clustered_sample(rs, 7, 2, 0.3);
    const WeightVector w = cluster_weights(s.design, rs);
    const double observed = one_sample_test(s.y, s.design, w, kind).statistic;
    std::size_t count = 0;
    const std::size_t total = std::size_t{1} << s.design.d;
    for (std::size_t code = 0; code < total; ++code) {
      Matrix flipped = s.y;
      for (std::size_t i = 0; i < s.design.n; ++i)
        if ((code >> s.design.cluster[i]) & 1u) flipped.row(Eigen::Index(i)) *= -1.0;
      const double q = one_sample_test(flipped, s.design, w, kind).statistic;
      count += q >= observed - 1e-9 * observed;
    }
    SignChangeOptions opt;
    opt.exhaustive = true;
    CHECK(sign_change_pvalue(s.y, s.design, w, kind, rs, opt) == doctest::Approx(double(count) / total));
  }
}

TEST_CASE("sampled sign-change p-value") {
  RandomStream rs(44, 0);
  const Sample s = clustered_sample(rs, 10, 3, 0.25);
  const WeightVector w = WeightVector::unit(s.design.n);
  SignChangeOptions ex;
  ex.exhaustive = true;
  const double exact = sign_change_pvalue(s.y, s.design, w, ScoreKind::Sign, rs, ex);
  SignChangeOptions sampled;
  sampled.reps = 20000;
  sampled.threads = 2;
  RandomStream a(7, 1), b(7, 1);
  const double p1 = sign_change_pvalue(s.y, s.design, w, ScoreKind::Sign, a, sampled);
  sampled.threads = 1;
  const double p2 = sign_change_pvalue(s.y, s.design, w, ScoreKind::Sign, b, sampled);
  CHECK(p1 == p2);
  CHECK(std::abs(p1 - exact) < 4.0 * std::sqrt(exact * (1 - exact) / 20000) + 1e-4);
  sampled.reps = 0;
  CHECK(sign_change_pvalue(s.y, s.design, w, ScoreKind::Sign, a, sampled) == 1.0);
}

TEST_CASE("sign-change p-value is super-uniform under a symmetric null") {
  RandomStream rs(45, 0);
  const std::vector<double> alphas{0.01, 0.05, 0.1};
  std::vector<std::size_t> hits(3, 0);
  const int datasets = 2000;
  SignChangeOptions opt;
  opt.exhaustive = true;
  for (int r = 0; r < datasets; ++r) {
    const Sample s = clustered_sample(rs, 8, 2);
    const double pv = sign_change_pvalue(s.y, s.design, WeightVector::unit(s.design.n),
                                         ScoreKind::Sign, rs, opt);
    for (std::size_t a = 0; a < 3; ++a) hits[a] += pv <= alphas[a];
  }
  for (std::size_t a = 0; a < 3; ++a) CHECK(double(hits[a]) / datasets <= alphas[a] + 0.015);
}

TEST_CASE("asymptotic p-values are uniform under the null") {
  // Kolmogorov-Smirnov at the 1% level, 5000 replications, d = 60 clusters of 5.
  const double crit = 1.6276 / std::sqrt(5000.0);
  for (double rho : {0.0, 0.4}) {
    SimConfig cfg;
    cfg.d = 60;
    cfg.rho = rho;
    cfg.seed = 11;
    cfg.cluster_sizes = {5};
    for (ScoreKind kind : {ScoreKind::Identity, ScoreKind::Sign, ScoreKind::SignedRank}) {
      std::vector<double> ps;
      for (int r = 0; r < 5000; ++r) {
        RandomStream rs(cfg.seed, r);
        auto pair = generate_pair(cfg, rs);
        Design d = build_design(pair.design.cluster);
        ps.push_back(one_sample_test(pair.null_data.y, d, WeightVector::unit(d.n), kind).p_asymptotic);
      }
      std::sort(ps.begin(), ps.end());
      double D = 0;
      const double m = double(ps.size());
      for (std::size_t i = 0; i < ps.size(); ++i)
        D = std::max({D, (i + 1.0) / m - ps[i], ps[i] - i / m});
      CAPTURE(rho);
      CAPTURE(int(kind));
      CHECK(D < crit);
    }
  }
}

TEST_CASE("location estimates solve their estimating equations") {
  RandomStream rs(46, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Sample s = clustered_sample(rs, 20, 2 + rep % 2, 1.0);
    const WeightVector w = cluster_weights(s.design, rs);
    const LocationEstimate mean = estimate_location(s.y, s.design, w, ScoreKind::Identity);
    CHECK((mean.mu_hat - s.y.transpose() * w.values() / double(s.design.n)).norm() < 1e-12);
    CHECK(mean.a_hat.isApprox(Matrix::Identity(s.y.cols(), s.y.cols())));

    const LocationEstimate med = estimate_location(s.y, s.design, w, ScoreKind::Sign);
    CHECK(med.converged);
    CHECK(med.residual <= 1e-8);
    CHECK((med.mu_hat - oracle::compass_median(s.y, w.values(), rs)).norm() < 1e-5);

    const LocationEstimate hl = estimate_location(s.y, s.design, w, ScoreKind::SignedRank);
    CHECK(hl.converged);
    CHECK(hl.residual <= 1e-8);
    const Matrix q = spatial_signed_ranks(s.y.rowwise() - hl.mu_hat.transpose(), &w);
    CHECK((q.transpose() * w.values()).norm() <= 1e-8);

    for (const auto* e : {&mean, &med, &hl}) {
      CHECK((e->covariance - e->covariance.transpose()).norm() < 1e-12);
      Eigen::SelfAdjointEigenSolver<Matrix> es(e->covariance);
      CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    }
  }
}

TEST_CASE("mean covariance is the cluster sandwich") {
  RandomStream rs(47, 0);
  const Sample s = clustered_sample(rs, 25, 2);
  const WeightVector w = WeightVector::unit(s.design.n);
  const LocationEstimate e = estimate_location(s.y, s.design, w, ScoreKind::Identity);
  const Matrix r = s.y.rowwise() - e.mu_hat.transpose();
  Matrix oracle = Matrix::Zero(2, 2);
  for (std::size_t i = 0; i < s.design.n; ++i)
    for (std::size_t j = 0; j < s.design.n; ++j)
      if (s.design.cluster[i] == s.design.cluster[j])
        oracle += r.row(Eigen::Index(i)).transpose() * r.row(Eigen::Index(j));
  CHECK((e.covariance - oracle / double(s.design.n)).norm() < 1e-12);
}

TEST_CASE("estimate_bc against double loops") {
  RandomStream rs(48, 0);
  const Sample s = clustered_sample(rs, 10, 3);
  const WeightVector w = cluster_weights(s.design, rs);
  const Matrix t = raw_scores(s.y, ScoreKind::Sign);
  const BCEstimate bc = estimate_bc(t, s.design, w);
  Matrix b = Matrix::Zero(3, 3), c = Matrix::Zero(3, 3);
  double db = 0.0, dc = 0.0;
  std::size_t k = 0;
  const double n = double(s.design.n);
  for (std::size_t i = 0; i < s.design.n; ++i) {
    b += t.row(Eigen::Index(i)).transpose() * t.row(Eigen::Index(i));
    db += w[i] * w[i];
    for (std::size_t j = 0; j < s.design.n; ++j) {
      if (i == j || s.design.cluster[i] != s.design.cluster[j]) continue;
      c += t.row(Eigen::Index(i)).transpose() * t.row(Eigen::Index(j));
      dc += w[i] * w[j];
      ++k;
    }
  }
  CHECK(k == s.design.intra_pair_count);
  CHECK((bc.B - b / n).norm() < 1e-13);
  CHECK((bc.C - c / double(k)).norm() < 1e-13);
  CHECK(bc.D_B == doctest::Approx(db / n));
  CHECK(bc.D_C == doctest::Approx(dc / n));

  const Design singletons = build_design(std::vector<int>{0, 1, 2, 3});
  const BCEstimate empty = estimate_bc(t.topRows(4), singletons, WeightVector::unit(4));
  CHECK(empty.c_empty);
  CHECK(empty.D_C == 0.0);
  CHECK(empty.D_B == 1.0);
}
