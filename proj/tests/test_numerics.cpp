#include <doctest.h>

#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <cmath>

#include "clustloc/numerics.hpp"
#include "clustloc/random.hpp"

using namespace clustloc;

namespace {

// Composite Simpson integral of the chi-square density over [0, x].
double chi2_cdf_simpson(double x, int df) {
  const double k = df / 2.0;
  auto density = [&](double t) {
    if (t <= 0.0) return df == 2 ? 0.5 : 0.0;
    return std::exp((k - 1.0) * std::log(t) - t / 2.0 - k * std::log(2.0) - std::lgamma(k));
  };
  // substitute t = s^2 to remove the t^{-1/2} singularity at df = 1
  const int steps = 20000;
  const double upper = std::sqrt(x);
  const double h = upper / steps;
  double sum = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double s = i * h;
    double f = 2.0 * s * density(s * s);
    if (df == 1 && i == 0) f = 2.0 / std::sqrt(2.0 * M_PI);
    sum += f * (i == 0 || i == steps ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return sum * h / 3.0;
}

Matrix random_psd(int dim, int rank, RandomStream& rs) {
  Matrix g(dim, rank);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < rank; ++j) g(i, j) = rs.normal();
  return g * g.transpose();
}

}  // namespace

TEST_CASE("chi2_tail against numerical integration") {
  for (int df : {1, 2, 3, 6, 10}) {
    for (double x : {0.3, 1.0, 3.84, 7.5, 15.0}) {
      CHECK(chi2_tail(x, df) == doctest::Approx(1.0 - chi2_cdf_simpson(x, df)).epsilon(1e-7));
    }
  }
  CHECK(chi2_tail(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(chi2_tail(0.0, 4) == 1.0);
}

TEST_CASE("chi2_tail_inverse round trip") {
  for (int df : {1, 3, 6, 12}) {
    for (double prob : {0.9, 0.5, 0.05, 0.01, 1e-6}) {
      const double x = chi2_tail_inverse(prob, df);
      CHECK(std::abs(chi2_tail(x, df) - prob) <= 1e-8 * std::max(prob, 1e-2));
    }
  }
}

TEST_CASE("noncentral tail against boost") {
  for (int df : {1, 3, 6}) {
    for (double ncp : {0.0, 0.5, 4.0, 25.0, 120.0}) {
      for (double x : {1.0, 7.8, 30.0}) {
        const boost::math::non_central_chi_squared dist(df, ncp);
        const double oracle = ncp == 0.0 ? chi2_tail(x, df) : boost::math::cdf(complement(dist, x));
        CHECK(noncentral_chi2_tail(x, df, ncp) == doctest::Approx(oracle).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("noncentral tail by simulation") {
  RandomStream rs(5, 0);
  const int df = 3;
  const double ncp = 6.0;
  const double x = chi2_tail_inverse(0.05, df);
  const std::size_t draws = 200000;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < draws; ++r) {
    double s = 0.0;
    for (int k = 0; k < df; ++k) {
      const double z = rs.normal() + (k == 0 ? std::sqrt(ncp) : 0.0);
      s += z * z;
    }
    hits += s >= x;
  }
  const double f = double(hits) / draws;
  const double power = noncentral_chi2_tail(x, df, ncp);
  CHECK(std::abs(f - power) < 4.0 * std::sqrt(power * (1 - power) / draws));
}

TEST_CASE("pinv_psd examples") {
  CHECK(pinv_psd(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 0.5;
  CHECK((pinv_psd(d) - expected).norm() < 1e-15);
}

TEST_CASE("pinv_psd against eigendecomposition") {
  RandomStream rs(11, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix m = random_psd(6, 1 + rep % 6, rs);
    const Matrix mp = pinv_psd(m);
    CHECK((m * mp * m - m).norm() <= 1e-9 * m.norm());
    CHECK((mp * m * mp - mp).norm() <= 1e-9 * mp.norm());
    // oracle: invert nonzero eigenvalues
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    Vector inv = es.eigenvalues();
    for (int k = 0; k < inv.size(); ++k)
      inv[k] = inv[k] > 1e-10 * es.eigenvalues().maxCoeff() ? 1.0 / inv[k] : 0.0;
    const Matrix oracle = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    CHECK((mp - oracle).norm() <= 1e-8 * oracle.norm());
  }
}

TEST_CASE("pinv_psd of nonsingular matrix is the inverse") {
  RandomStream rs(12, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix m = random_psd(5, 8, rs);
    CHECK((pinv_psd(m) - m.inverse()).norm() <= 1e-8 * m.inverse().norm());
  }
}

TEST_CASE("invert_psd flags singular middles") {
  RandomStream rs(13, 0);
  const Matrix full = random_psd(4, 6, rs);
  const PsdInverse a = invert_psd(full);
  CHECK_FALSE(a.rank_deficient);
  CHECK((a.inverse * full - Matrix::Identity(4, 4)).norm() < 1e-8);

  const Matrix low = random_psd(4, 2, rs);
  const PsdInverse b = invert_psd(low);
  CHECK(b.rank_deficient);
  CHECK((b.inverse - pinv_psd(low)).norm() <= 1e-8 * b.inverse.norm());

  Vector v = Vector::Ones(4);
  bool flag = false;
  CHECK(inverse_quadratic_form(full, v, &flag) == doctest::Approx(v.dot(full.inverse() * v)));
  CHECK_FALSE(flag);
}

TEST_CASE("is_symmetric") {
  Matrix m(2, 2);
  m << 1.0, 2.0, 2.0 + 1e-14, 3.0;
  CHECK(is_symmetric(m));
  m(1, 0) = 2.1;
  CHECK_FALSE(is_symmetric(m));
}
