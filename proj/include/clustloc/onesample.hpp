#pragma once

#include <cstddef>
#include <optional>

#include "clustloc/design.hpp"
#include "clustloc/numerics.hpp"
#include "clustloc/random.hpp"
#include "clustloc/scores.hpp"
#include "clustloc/weiszfeld.hpp"

namespace clustloc {

struct TestResult {
  double statistic = 0.0;  // Q^2
  int df = 0;
  double p_asymptotic = 1.0;
  std::optional<double> p_resampling;
  std::size_t resampling_reps = 0;
  Matrix middle;  // consistent covariance estimate inside the quadratic form
  Vector weights_used;
  bool rank_deficient = false;  // middle inverted through the pseudo-inverse
  bool c_term_dropped = false;  // no within-cluster pairs (k = 0)
};

struct LocationEstimate {
  Vector mu_hat;
  Matrix covariance;  // asymptotic covariance of sqrt(n) (mu_hat - mu)
  Matrix a_hat;
  int iterations = 0;
  bool converged = false;
  bool degraded = false;  // A-hat condition number above 1e10
  double residual = 0.0;  // ||1' W T-hat|| at the solution
};

// The matrices governing the asymptotics: A (score sensitivity), B (marginal
// score covariance), C (within-cluster cross covariance) and the scalar design
// limits D_B, D_C.
struct ScoreMatrices {
  Matrix A;
  Matrix B;
  Matrix C;
  double D_B = 1.0;
  double D_C = 0.0;
};

struct BCEstimate {
  Matrix B;
  Matrix C;
  double D_B = 1.0;
  double D_C = 0.0;
  bool c_empty = false;  // k = 0, so C-hat is reported as zero
};

/// Q^2 for H0: mu = 0 with uncentered odd scores and the cluster-sum middle
/// n^{-1} T'WZZ'WT. df = p.
TestResult one_sample_test(const Matrix& y, const Design& design, const WeightVector& w,
                           ScoreKind kind);

struct SignChangeOptions {
  std::size_t reps = 1000;
  bool exhaustive = false;  // enumerate all 2^d patterns (d <= 20)
  unsigned threads = 1;
};

/// Sign-change p-value (1 + #{Q^2_J >= Q^2}) / (reps + 1). In exhaustive mode
/// the observed pattern is one of the 2^d and the p-value is #{...} / 2^d.
double sign_change_pvalue(const Matrix& y, const Design& design, const WeightVector& w,
                          ScoreKind kind, RandomStream& stream, const SignChangeOptions& options);

struct LocationOptions {
  double tolerance = 1e-8;  // on ||1' W T-hat||
  int max_iter = 500;
  std::optional<Vector> init;
};

/// Weighted mean, spatial median or Hodges-Lehmann estimate with its
/// covariance A^{-1} (n^{-1} T'WZZ'WT) A^{-1}.
LocationEstimate estimate_location(const Matrix& y, const Design& design, const WeightVector& w,
                                   ScoreKind kind, const LocationOptions& options = {});

/// B-hat = T'T / n, C-hat = T'(ZZ' - I)T / k, D_B = 1'W^2 1 / n and
/// D_C = 1'W(ZZ' - I)W1 / n.
BCEstimate estimate_bc(const Matrix& scores, const Design& design, const WeightVector& w);

/// Per-cluster sums of w_i T_i, d x p.
Matrix cluster_sums(const Matrix& scores, const Design& design, const WeightVector& w);

}  // namespace clustloc
