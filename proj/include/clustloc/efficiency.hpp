#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "clustloc/design.hpp"
#include "clustloc/multisample.hpp"
#include "clustloc/onesample.hpp"
#include "clustloc/random.hpp"
#include "clustloc/scores.hpp"

namespace clustloc {

enum class Family { Normal, T };

const char* to_string(Family family);

// Spherical p-variate normal or t_nu errors with intracluster correlation rho
// (the Pearson correlation of the normal part; the t scale divisor is shared
// by the whole cluster).
struct PopulationModel {
  int p = 3;
  Family family = Family::Normal;
  double nu = std::numeric_limits<double>::infinity();
  double rho = 0.0;
};

void validate(const PopulationModel& model);

// A = a I, B = b I, C = c I under a spherical model.
struct MomentScalars {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

struct MomentBatches {
  MomentScalars pooled;
  std::vector<MomentScalars> batches;  // equal-size batches, pooled = mean
};

/// Monte Carlo moments split into batches. Marginal moments (a, b) use draws
/// that do not depend on rho, and the within-cluster pairs reuse the same
/// underlying normals for every rho, so curves in rho are smooth.
/// Identity scores use closed forms: a = 1, b = v, c = rho v, v = E(1/g).
MomentBatches score_moment_batches(const PopulationModel& model, ScoreKind kind,
                                   std::size_t draws, std::size_t batches, std::uint64_t seed,
                                   unsigned threads = 1);

ScoreMatrices score_moments(const PopulationModel& model, ScoreKind kind, std::size_t draws,
                            RandomStream& stream);

ScoreMatrices to_matrices(const MomentScalars& m, int p);

struct NoncentralityResult {
  double ncp = 0.0;
  int df = 0;
  double ncp_alt = 0.0;         // second displayed form, for the c-sample case
  bool rank_deficient = false;  // pseudo-inverse used
  bool projected = false;       // Delta0 lambda != 0 was projected out
};

/// delta' A (D_B B + D_C C)^{-1} A delta, df = p.
NoncentralityResult noncentrality_one_sample(const ScoreMatrices& sm, const Vector& delta);

/// vec(Delta0 Lambda H)'[(H'D_B H) x A^-1 B A^-1 + (H'D_C H) x A^-1 C A^-1]^{-1} vec(Delta0 Lambda H),
/// cross-checked against vec(A Delta0 Lambda)'[D_B x B + D_C x C]^+ vec(A Delta0 Lambda).
/// Throws InternalError when the two disagree beyond 1e-6 relative.
NoncentralityResult noncentrality_c_sample(const ScoreMatrices& sm, const DesignLimits& limits,
                                           const Matrix& delta0);

// Idealized two-group designs for efficiency curves, one block per cluster size:
//   A: labels independent per unit, every within-cluster composition present
//      in binomial proportion
//   B: each cluster split as evenly as possible
//   C: whole clusters in each group
// Every size contributes the same number of clusters.
struct IdealDesignSpec {
  PermutationScheme scheme = PermutationScheme::B;
  std::vector<std::size_t> sizes{2, 8};
};

Design idealized_design(const IdealDesignSpec& spec);

enum class Weighting { Unweighted, Optimal };
const char* to_string(Weighting weighting);

struct AreOptions {
  std::size_t draws = 400000;
  std::size_t batches = 10;
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
};

struct AreRow {
  PermutationScheme scheme = PermutationScheme::B;
  ScoreKind kind = ScoreKind::Identity;
  Weighting weighting = Weighting::Unweighted;
  PopulationModel model;
  double are = 0.0;
  double mc_se = 0.0;
};

/// Noncentrality of the two-sample test for a unit contrast along (1,...,1).
/// Optimal weights are the Hotelling-optimal two-sample weights at model.rho.
double two_sample_ncp(const MomentScalars& m, int p, const Design& design, Weighting weighting,
                      double rho);

/// ARE of (kind, weighting) against unweighted Hotelling at each model.
std::vector<AreRow> are_curve(const std::vector<PopulationModel>& models, const IdealDesignSpec& spec,
                              const std::vector<ScoreKind>& kinds,
                              const std::vector<Weighting>& weightings, const AreOptions& options = {});

/// rho in {0, 0.05, ..., 0.95}
std::vector<double> default_rho_grid();

}  // namespace clustloc
