#include "clustloc/numerics.hpp"

#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "clustloc/errors.hpp"

namespace clustloc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DegenerateInput: return "degenerate-input";
    case ErrorCode::DegenerateDesign: return "degenerate-design";
    case ErrorCode::UnsupportedDesign: return "unsupported-design";
    case ErrorCode::InvalidDesign: return "invalid-design";
    case ErrorCode::EstimationFailure: return "estimation-failure";
    case ErrorCode::MomentNonexistence: return "moment-nonexistence";
    case ErrorCode::FormatError: return "format-error";
    case ErrorCode::InternalError: return "internal-error";
  }
  return "unknown";
}

namespace {

constexpr double kSingularRatio = 1e-10;

double gamma_upper(double shape, double z) {
  if (z <= 0.0) return 1.0;
  if (std::isinf(z)) return 0.0;
  return boost::math::gamma_q(shape, z);
}

}  // namespace

double chi2_tail(double x, int df) {
  require(df > 0, "chi2_tail: df must be positive");
  require(!(x < 0.0), "chi2_tail: x must be nonnegative");
  return gamma_upper(0.5 * df, 0.5 * x);
}

double chi2_tail_inverse(double prob, int df) {
  require(df > 0, "chi2_tail_inverse: df must be positive");
  require(prob > 0.0 && prob <= 1.0, "chi2_tail_inverse: prob must be in (0, 1]");
  if (prob == 1.0) return 0.0;
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(df));
  while (chi2_tail(hi, df) > prob) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_tail(mid, df) > prob)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double noncentral_chi2_tail(double x, int df, double ncp) {
  require(df > 0, "noncentral_chi2_tail: df must be positive");
  require(ncp >= 0.0, "noncentral_chi2_tail: ncp must be nonnegative");
  require(!(x < 0.0), "noncentral_chi2_tail: x must be nonnegative");
  if (ncp == 0.0) return chi2_tail(x, df);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;

  constexpr double kRelCut = 1e-12;
  const double lambda = 0.5 * ncp;
  const double half_x = 0.5 * x;
  const double half_df = 0.5 * df;
  const long mode = static_cast<long>(std::floor(lambda));
  const double log_mode_weight =
      -lambda + mode * std::log(lambda) - std::lgamma(static_cast<double>(mode) + 1.0);
  const double mode_weight = std::exp(log_mode_weight);

  double sum = mode_weight * gamma_upper(half_df + mode, half_x);

  // Upward: tail terms increase toward one, so the leftover is bounded by the
  // geometric majorant of the remaining Poisson weights.
  double weight = mode_weight;
  for (long j = mode + 1;; ++j) {
    weight *= lambda / static_cast<double>(j);
    sum += weight * gamma_upper(half_df + j, half_x);
    const double ratio = lambda / static_cast<double>(j + 1);
    const double remainder = weight * ratio / (1.0 - ratio);
    if (remainder <= kRelCut * sum || weight == 0.0) break;
  }
  // Downward: both factors shrink.
  weight = mode_weight;
  for (long j = mode; j > 0; --j) {
    weight *= static_cast<double>(j) / lambda;
    const double term = weight * gamma_upper(half_df + (j - 1), half_x);
    sum += term;
    if (term <= kRelCut * sum) break;
  }
  return std::min(1.0, std::max(0.0, sum));
}

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return m.allFinite();
  return ((m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale);
}

Matrix pinv_psd(const Matrix& m) {
  require(m.rows() == m.cols(), "pinv_psd: matrix must be square");
  require(m.allFinite(), "pinv_psd: non-finite entries");
  require(is_symmetric(m), "pinv_psd: matrix is not symmetric");
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector& values = eig.eigenvalues();
  const double top = values.cwiseAbs().maxCoeff();
  Vector inv = Vector::Zero(values.size());
  if (top > 0.0) {
    for (Eigen::Index i = 0; i < values.size(); ++i)
      if (values[i] > kSingularRatio * top) inv[i] = 1.0 / values[i];
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

PsdInverse invert_psd(const Matrix& m) {
  require(m.rows() == m.cols(), "invert_psd: matrix must be square");
  PsdInverse out;
  const double max_diag = m.rows() > 0 ? m.diagonal().maxCoeff() : 0.0;
  if (max_diag > 0.0) {
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() == Eigen::Success &&
        ldlt.vectorD().minCoeff() > kSingularRatio * max_diag) {
      out.inverse = ldlt.solve(Matrix::Identity(m.rows(), m.cols()));
      out.inverse = 0.5 * (out.inverse + out.inverse.transpose());
      return out;
    }
  }
  out.inverse = pinv_psd(m);
  out.rank_deficient = true;
  return out;
}

double inverse_quadratic_form(const Matrix& m, const Vector& v, bool* rank_deficient) {
  require(m.rows() == v.size(), "inverse_quadratic_form: dimension mismatch");
  const double max_diag = m.rows() > 0 ? m.diagonal().maxCoeff() : 0.0;
  if (max_diag > 0.0) {
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() == Eigen::Success &&
        ldlt.vectorD().minCoeff() > kSingularRatio * max_diag) {
      if (rank_deficient) *rank_deficient = false;
      return v.dot(ldlt.solve(v));
    }
  }
  if (rank_deficient) *rank_deficient = true;
  return v.dot(pinv_psd(m) * v);
}

double reciprocal_condition(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (!(s[0] > 0.0)) return 0.0;
  return s[s.size() - 1] / s[0];
}

}  // namespace clustloc
