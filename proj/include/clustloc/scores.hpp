#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clustloc/design.hpp"
#include "clustloc/numerics.hpp"
#include "clustloc/weiszfeld.hpp"

namespace clustloc {

enum class ScoreKind { Identity, Sign, Rank, SignedRank };

const char* to_string(ScoreKind kind);
ScoreKind parse_score_kind(const std::string& text);

/// Identity, spatial sign and spatial signed rank are odd; spatial rank is not.
bool is_odd(ScoreKind kind);

/// y / ||y||, or the zero vector when ||y|| <= zero_tol.
Vector spatial_sign(const Vector& y, double zero_tol = 0.0);

/// Row-wise spatial signs. Rows with norm below 1e-12 times the largest row
/// norm map to zero.
Matrix spatial_signs(const Matrix& y);

/// Centered spatial ranks n^{-1} sum_j w_j S(y_i - y_j); w defaults to ones.
/// Exact ties contribute zero.
Matrix spatial_ranks(const Matrix& y, const WeightVector* w = nullptr);

/// Spatial signed ranks (2n)^{-1} sum_j w_j [S(y_i - y_j) + S(y_i + y_j)];
/// w defaults to ones, giving the usual Q_n.
Matrix spatial_signed_ranks(const Matrix& y, const WeightVector* w = nullptr);

/// Uncentered scores T(y_i) of an odd kind, used by the one-sample test.
Matrix raw_scores(const Matrix& y, ScoreKind kind);

/// Weighted one-sample Hodges-Lehmann location: the weighted spatial median of
/// the Walsh averages (y_i + y_j) / 2 over ordered pairs, i.e. weight 2 w_i w_j
/// for i < j and w_i^2 on the diagonal. Its estimating equation is
/// sum_i w_i Q_i = 0 for the weighted signed ranks Q of the residuals.
L1Solution hodges_lehmann_one_sample(const Matrix& y, const WeightVector& w,
                                     double tolerance = 1e-8, int max_iter = 500,
                                     const std::optional<Vector>& init = std::nullopt);

struct CenteredScores {
  Matrix scores;                  // n x p, with sum_i w_i T_i = 0
  std::optional<Vector> location; // pooled center for identity / sign kinds
  double centering_residual = 0.0;  // ||sum_i w_i T_i||_inf
};

// Inner-centered scores of the pooled sample: identity, sign and signed-rank
// kinds are evaluated at the weighted mean / spatial median / Hodges-Lehmann
// location (or at `location` when supplied); rank scores are the weighted
// centered ranks. When the estimated spatial median is a data point, the sign
// of that point is the subgradient element that makes the scores sum to zero.
CenteredScores centered_scores(const Matrix& y, const Design& design, const WeightVector& w,
                               ScoreKind kind, const std::optional<Vector>& location = std::nullopt,
                               const L1SolverOptions& solver = {});

/// A(e) = ||e||^{-1} (I - e e' / ||e||^2); zero for e = 0.
Matrix a_matrix(const Vector& e);

// Estimated location shifts between groups used by the rank version of a_hat:
// shift(r, s) estimates mu_r - mu_s.
struct PairShifts {
  std::size_t c = 0;
  std::vector<Vector> values;  // row-major c x c
  const Vector& operator()(std::size_t r, std::size_t s) const { return values[r * c + s]; }
};

// Empirical derivative matrix A-hat for a score kind.
//   identity:    I
//   sign:        ave_i A(e_i)
//   signed rank: ave over between-cluster pairs of A((e_i + e_j) / 2)
//   rank:        ave over between-cluster pairs of A(y_i - y_j - shift(r, s)),
//                i in group r, j in group s (shift zero without groups)
// Zero-norm arguments are counted out of the averages.
Matrix a_hat(const Matrix& residuals, const Design& design, ScoreKind kind,
             const PairShifts* shifts = nullptr);

}  // namespace clustloc
