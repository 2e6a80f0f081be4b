#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clustloc/design.hpp"
#include "clustloc/onesample.hpp"
#include "clustloc/random.hpp"
#include "clustloc/scores.hpp"

namespace clustloc {

// Empirical design limits: D_B = X0'W^2X0/n, D_C = X0'W(ZZ'-I)WX0/n and the
// diagonal of Lambda = X'WX/n, with X0 = (I - n^{-1} 1 1'W) X.
struct DesignLimits {
  Matrix D_B;
  Matrix D_C;
  Vector lambda;
};

DesignLimits design_limits(const Design& design, const WeightVector& w);
/// Same limits for an alternative group labeling of the design's clusters.
DesignLimits design_limits(const Design& design, const WeightVector& w, std::span<const int> groups);

// Q^2 of the c-sample test as a function of the group labeling, for fixed
// inner-centered scores. Centering does not depend on the labels, so the
// scores and B-hat, C-hat are computed once and relabelings are cheap.
class CSampleStatistic {
 public:
  CSampleStatistic(Matrix centered_scores, const Design& design, const WeightVector& w);

  struct Evaluation {
    double statistic = 0.0;
    Matrix middle;
    bool rank_deficient = false;
  };

  Evaluation evaluate(std::span<const int> groups) const;
  double statistic(std::span<const int> groups) const { return evaluate(groups).statistic; }

  const Matrix& b_hat() const { return b_hat_; }
  const Matrix& c_hat() const { return c_hat_; }
  bool c_term_dropped() const { return design_.intra_pair_count == 0; }

 private:
  Matrix scores_;
  Design design_;
  Vector w_;
  Matrix b_hat_;
  Matrix c_hat_;
};

/// Result 4 test of H0: no treatment effect. df = p(c - 1).
TestResult c_sample_test(const Matrix& y, const Design& design, const WeightVector& w,
                         ScoreKind kind);

struct PermutationOptions {
  std::size_t reps = 1000;
  unsigned threads = 1;
};

/// (1 + #{Q^2(PX) >= Q^2(X)}) / (reps + 1) over draws from the scheme; weights
/// stay as computed for the observed design.
double permutation_pvalue(const Matrix& y, const Design& design, const WeightVector& w,
                          ScoreKind kind, PermutationScheme scheme, RandomStream& stream,
                          const PermutationOptions& options = {});

/// Q^2 for each supplied relabeling of the groups.
std::vector<double> permutation_statistics(const Matrix& y, const Design& design,
                                           const WeightVector& w, ScoreKind kind,
                                           const std::vector<std::vector<int>>& labelings);

struct GroupCenters {
  Matrix beta;  // c x p
  std::vector<int> iterations;
  std::vector<std::optional<std::string>> errors;  // per group, empty when fine
  bool ok() const;
};

/// Solves X'W T-hat = 0 group by group with the one-sample estimator.
GroupCenters group_centers(const Matrix& y, const Design& design, const WeightVector& w,
                           ScoreKind kind);

/// Weighted two-sample Hodges-Lehmann estimate of mu_j - mu_i: the weighted
/// spatial median of y_b - y_a (a in group i, b in group j, weight w_a w_b).
L1Solution hodges_lehmann_two_sample(const Matrix& y, const Design& design, const WeightVector& w,
                                     std::size_t i, std::size_t j, double tolerance = 1e-8,
                                     int max_iter = 500);

struct PairwiseDifference {
  std::size_t i = 0;
  std::size_t j = 0;
  Vector theta;           // estimate of mu_j - mu_i
  Matrix covariance;      // A^{-1}(gamma_B B + gamma_C C)A^{-1} / n
  Matrix covariance_alt;  // A^{-1}(T'W*ZZ'W*T)A^{-1}, two samples only
  double gamma_B = 0.0;
  double gamma_C = 0.0;
  bool alt_preferred = false;  // per-group trace(B) ratio above 2
  Matrix a_hat;
};

/// Both covariances are for theta itself (not sqrt(n)-scaled).
PairwiseDifference pairwise_difference(const Matrix& y, const Design& design, const WeightVector& w,
                                       ScoreKind kind, std::size_t i, std::size_t j);

/// gamma_B and gamma_C of the pairwise covariance breakdown at finite n.
std::pair<double, double> gamma_constants(const Design& design, const WeightVector& w,
                                          std::size_t i, std::size_t j);

struct GroupEstimates {
  Matrix beta;
  std::vector<PairwiseDifference> pairs;  // every i < j
};

GroupEstimates estimate_groups(const Matrix& y, const Design& design, const WeightVector& w,
                               ScoreKind kind);

}  // namespace clustloc
