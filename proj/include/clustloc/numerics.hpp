#pragma once

#include <Eigen/Dense>

namespace clustloc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Upper tail P(chi2_df >= x).
double chi2_tail(double x, int df);

/// Inverse of chi2_tail: the x with chi2_tail(x, df) == prob, found by bisection.
double chi2_tail_inverse(double prob, int df);

/// Upper tail of the noncentral chi-square, P(chi2_df(ncp) >= x).
///
/// Evaluated as the Poisson(ncp/2) mixture of central tails, summed outward
/// from the Poisson mode until the remaining mass is below 1e-12 of the
/// accumulated value.
double noncentral_chi2_tail(double x, int df, double ncp);

bool is_symmetric(const Matrix& m, double rel_tol = 1e-12);

/// Moore-Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
/// Eigenvalues at or below 1e-10 times the largest one are treated as zero.
Matrix pinv_psd(const Matrix& m);

// Inverse of a symmetric PSD "middle" matrix of a quadratic form. An LDLT
// factorization is used unless a pivot falls below 1e-10 times the largest
// diagonal entry, in which case the pseudo-inverse is returned and the
// rank_deficient flag is raised.
struct PsdInverse {
  Matrix inverse;
  bool rank_deficient = false;
};

PsdInverse invert_psd(const Matrix& m);

/// v' M^{-1} v with the same singularity handling as invert_psd.
double inverse_quadratic_form(const Matrix& m, const Vector& v,
                              bool* rank_deficient = nullptr);

/// Reciprocal condition estimate (smallest / largest absolute eigenvalue).
double reciprocal_condition(const Matrix& m);

}  // namespace clustloc
