#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clustloc/numerics.hpp"
#include "clustloc/random.hpp"

namespace clustloc {

/// Responses with cluster labels and optional group labels, as read from disk.
/// Labels are kept verbatim; Design holds the contiguous 0-based recoding.
struct DataSet {
  Matrix y;  // n x p
  std::vector<std::string> cluster_labels;
  std::vector<std::string> group_labels;  // empty when there are no groups
  std::vector<std::string> response_names;

  std::size_t n() const { return static_cast<std::size_t>(y.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(y.cols()); }
  bool has_groups() const { return !group_labels.empty(); }
};

// Cluster and group membership in 0-based contiguous codes, with the counts
// every statistic needs. Codes follow first-appearance order of the labels.
struct Design {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t c = 0;  // 0 when there are no groups
  std::vector<int> cluster;
  std::vector<int> group;
  std::vector<std::size_t> cluster_sizes;
  std::vector<std::size_t> group_sizes;
  std::vector<std::vector<std::size_t>> members;     // rows of each cluster
  std::vector<std::vector<std::size_t>> contingency;  // c x d table X'Z
  std::size_t intra_pair_count = 0;                  // k = sum m_i (m_i - 1)

  bool has_groups() const { return c > 0; }
};

Design build_design(std::span<const std::string> cluster_labels,
                    std::span<const std::string> group_labels = {});
Design build_design(std::span<const int> cluster_labels,
                    std::span<const int> group_labels = {});
Design build_design(const DataSet& data);

/// Same clusters, new group labels (0-based codes, assumed contiguous).
Design with_groups(const Design& design, std::span<const int> group_codes);

// Nonnegative per-observation weights normalized to sum to n.
class WeightVector {
 public:
  /// Normalizes raw to sum n = raw.size(). Throws on negative or all-zero input.
  explicit WeightVector(Vector raw);
  static WeightVector unit(std::size_t n);

  const Vector& values() const { return w_; }
  double operator[](std::size_t i) const { return w_[static_cast<Eigen::Index>(i)]; }
  std::size_t size() const { return static_cast<std::size_t>(w_.size()); }
  bool is_constant(double tol = 1e-12) const;

 private:
  Vector w_;
};

enum class PermutationScheme { A, B, C };

const char* to_string(PermutationScheme scheme);
PermutationScheme parse_scheme(const std::string& text);

/// Weights proportional to 1 / (1 + (m_i - 1) rho) for members of cluster i.
WeightVector optimal_weights_one_sample(const Design& design, double rho);

/// Two-sample optimal weights w = Sigma^{-1}(k1 x1 + k2 1) with
/// Sigma = (1 - rho) I + rho G Z Z' G, G = diag(x1 - x2). The multipliers are
/// fixed by w'x1 = n1 and w'1 = n. Sigma is inverted cluster by cluster.
WeightVector optimal_weights_two_sample(const Design& design, double rho);

/// clamp(trace(C) / trace(B), 0, 1 - 1e-6).
double estimate_rho(const Matrix& b_hat, const Matrix& c_hat);

inline constexpr double kRhoCeiling = 1.0 - 1e-6;

using SignVector = std::vector<signed char>;

/// count uniform draws from {-1, +1}^d, one sign per cluster.
std::vector<SignVector> sign_flips(const Design& design, std::size_t count,
                                   RandomStream& stream);
/// All 2^d sign patterns (d <= 20) in binary counting order.
std::vector<SignVector> all_sign_flips(const Design& design);

/// One acceptable relabeling of the group codes under the given scheme.
std::vector<int> draw_permutation(const Design& design, PermutationScheme scheme,
                                  RandomStream& stream);
std::vector<std::vector<int>> permutations(const Design& design, PermutationScheme scheme,
                                           std::size_t count, RandomStream& stream);

/// Throws InvalidDesign when the scheme cannot be applied to this design.
void check_scheme(const Design& design, PermutationScheme scheme);

using Table = std::vector<std::vector<std::size_t>>;

/// Canonical representative of a table under independent row and column
/// permutations.
Table canonical_table(const Table& table);

/// True iff the c x d contingency tables of the two designs coincide up to
/// row and column permutations.
bool equivalent_in_structure(std::span<const int> groups1, std::span<const int> clusters1,
                             std::span<const int> groups2, std::span<const int> clusters2);
bool equivalent_in_structure(const Table& t1, const Table& t2);

}  // namespace clustloc
