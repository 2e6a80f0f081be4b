#include "clustloc/design.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <numeric>
#include <unordered_map>

#include "clustloc/errors.hpp"

namespace clustloc {

namespace {

template <class Label>
std::vector<int> first_appearance(std::span<const Label> labels, std::size_t& count) {
  std::unordered_map<Label, int> seen;
  std::vector<int> codes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = seen.try_emplace(labels[i], static_cast<int>(seen.size()));
    codes[i] = it->second;
  }
  count = seen.size();
  return codes;
}

Design assemble(std::vector<int> cluster, std::size_t d, std::vector<int> group, std::size_t c) {
  Design out;
  out.n = cluster.size();
  require(out.n > 0, "build_design: no observations");
  require(group.empty() || group.size() == out.n,
          "build_design: cluster and group label lengths differ");
  out.d = d;
  out.c = group.empty() ? 0 : c;
  out.cluster = std::move(cluster);
  out.group = std::move(group);
  out.cluster_sizes.assign(d, 0);
  out.members.assign(d, {});
  for (std::size_t i = 0; i < out.n; ++i) {
    const auto k = static_cast<std::size_t>(out.cluster[i]);
    require(out.cluster[i] >= 0 && k < d, "build_design: cluster code out of range");
    ++out.cluster_sizes[k];
    out.members[k].push_back(i);
  }
  for (std::size_t k = 0; k < d; ++k) {
    if (out.cluster_sizes[k] == 0) fail(ErrorCode::InvalidArgument, "build_design: empty cluster");
    out.intra_pair_count += out.cluster_sizes[k] * (out.cluster_sizes[k] - 1);
  }
  if (out.c > 0) {
    out.group_sizes.assign(out.c, 0);
    out.contingency.assign(out.c, std::vector<std::size_t>(d, 0));
    for (std::size_t i = 0; i < out.n; ++i) {
      const auto g = static_cast<std::size_t>(out.group[i]);
      require(out.group[i] >= 0 && g < out.c, "build_design: group code out of range");
      ++out.group_sizes[g];
      ++out.contingency[g][static_cast<std::size_t>(out.cluster[i])];
    }
    for (std::size_t g = 0; g < out.c; ++g)
      if (out.group_sizes[g] == 0) fail(ErrorCode::InvalidArgument, "build_design: empty group");
  }
  return out;
}

template <class Label>
Design build_generic(std::span<const Label> clusters, std::span<const Label> groups) {
  require(groups.empty() || groups.size() == clusters.size(),
          "build_design: cluster and group label lengths differ");
  std::size_t d = 0, c = 0;
  auto cluster_codes = first_appearance(clusters, d);
  std::vector<int> group_codes;
  if (!groups.empty()) group_codes = first_appearance(groups, c);
  return assemble(std::move(cluster_codes), d, std::move(group_codes), c);
}

}  // namespace

Design build_design(std::span<const std::string> cluster_labels,
                    std::span<const std::string> group_labels) {
  return build_generic(cluster_labels, group_labels);
}

Design build_design(std::span<const int> cluster_labels, std::span<const int> group_labels) {
  return build_generic(cluster_labels, group_labels);
}

Design build_design(const DataSet& data) {
  require(data.cluster_labels.size() == data.n(), "build_design: label count differs from rows");
  return build_design(std::span<const std::string>(data.cluster_labels),
                      std::span<const std::string>(data.group_labels));
}

Design with_groups(const Design& design, std::span<const int> group_codes) {
  require(group_codes.size() == design.n, "with_groups: wrong label count");
  int top = -1;
  for (int g : group_codes) top = std::max(top, g);
  return assemble(design.cluster, design.d, {group_codes.begin(), group_codes.end()},
                  static_cast<std::size_t>(top + 1));
}

WeightVector::WeightVector(Vector raw) : w_(std::move(raw)) {
  require(w_.size() > 0, "WeightVector: empty");
  require(w_.allFinite(), "WeightVector: non-finite weight");
  require(w_.minCoeff() >= 0.0, "WeightVector: negative weight");
  const double total = w_.sum();
  require(total > 0.0, "WeightVector: weights sum to zero");
  w_ *= static_cast<double>(w_.size()) / total;
}

WeightVector WeightVector::unit(std::size_t n) {
  return WeightVector(Vector::Ones(static_cast<Eigen::Index>(n)));
}

bool WeightVector::is_constant(double tol) const {
  return (w_.array() - 1.0).abs().maxCoeff() <= tol;
}

const char* to_string(PermutationScheme scheme) {
  switch (scheme) {
    case PermutationScheme::A: return "A";
    case PermutationScheme::B: return "B";
    case PermutationScheme::C: return "C";
  }
  return "?";
}

PermutationScheme parse_scheme(const std::string& text) {
  if (text == "A" || text == "a") return PermutationScheme::A;
  if (text == "B" || text == "b") return PermutationScheme::B;
  if (text == "C" || text == "c") return PermutationScheme::C;
  fail(ErrorCode::InvalidArgument, "unknown design scheme '" + text + "'");
}

WeightVector optimal_weights_one_sample(const Design& design, double rho) {
  require(rho >= 0.0 && rho < 1.0, "optimal_weights_one_sample: rho must be in [0, 1)");
  rho = std::min(rho, kRhoCeiling);
  Vector w(static_cast<Eigen::Index>(design.n));
  for (std::size_t i = 0; i < design.n; ++i) {
    const double m = static_cast<double>(design.cluster_sizes[static_cast<std::size_t>(design.cluster[i])]);
    w[static_cast<Eigen::Index>(i)] = 1.0 / (1.0 + (m - 1.0) * rho);
  }
  return WeightVector(std::move(w));
}

WeightVector optimal_weights_two_sample(const Design& design, double rho) {
  if (design.c != 2)
    fail(ErrorCode::UnsupportedDesign, "optimal_weights_two_sample: needs exactly two groups");
  require(rho >= 0.0 && rho < 1.0, "optimal_weights_two_sample: rho must be in [0, 1)");
  rho = std::min(rho, kRhoCeiling);

  const auto n = static_cast<Eigen::Index>(design.n);
  Vector x1(n), u(n), v(n);
  for (Eigen::Index i = 0; i < n; ++i) x1[i] = design.group[static_cast<std::size_t>(i)] == 0 ? 1.0 : 0.0;

  // Per cluster, Sigma_k = (1 - rho) I + rho g g' with g = +-1 and g'g = m, so
  // Sigma_k^{-1} a = (a - rho g (g'a) / (1 - rho + rho m)) / (1 - rho).
  for (const auto& rows : design.members) {
    const double m = static_cast<double>(rows.size());
    const double denom = 1.0 - rho + rho * m;
    double g_dot_x1 = 0.0, g_dot_1 = 0.0;
    for (std::size_t i : rows) {
      const double g = 2.0 * x1[static_cast<Eigen::Index>(i)] - 1.0;
      g_dot_x1 += g * x1[static_cast<Eigen::Index>(i)];
      g_dot_1 += g;
    }
    for (std::size_t i : rows) {
      const auto r = static_cast<Eigen::Index>(i);
      const double g = 2.0 * x1[r] - 1.0;
      u[r] = (x1[r] - rho * g * g_dot_x1 / denom) / (1.0 - rho);
      v[r] = (1.0 - rho * g * g_dot_1 / denom) / (1.0 - rho);
    }
  }

  Eigen::Matrix2d system;
  system << x1.dot(u), x1.dot(v), u.sum(), v.sum();
  const Eigen::Vector2d rhs(static_cast<double>(design.group_sizes[0]), static_cast<double>(design.n));
  const double scale = system.cwiseAbs().maxCoeff();
  if (!(std::abs(system.determinant()) > 1e-12 * scale * scale))
    fail(ErrorCode::DegenerateDesign, "optimal_weights_two_sample: singular constraint system");
  const Eigen::Vector2d kappa = system.fullPivLu().solve(rhs);
  Vector w = kappa[0] * u + kappa[1] * v;
  if (w.minCoeff() < -1e-10 * w.cwiseAbs().maxCoeff())
    fail(ErrorCode::DegenerateDesign, "optimal_weights_two_sample: constraints force negative weights");
  w = w.cwiseMax(0.0);
  return WeightVector(std::move(w));
}

double estimate_rho(const Matrix& b_hat, const Matrix& c_hat) {
  require(b_hat.rows() == b_hat.cols() && c_hat.rows() == b_hat.rows() && c_hat.cols() == b_hat.cols(),
          "estimate_rho: dimension mismatch");
  const double tb = b_hat.trace();
  require(tb > 0.0, "estimate_rho: trace(B) must be positive");
  return std::clamp(c_hat.trace() / tb, 0.0, kRhoCeiling);
}

std::vector<SignVector> sign_flips(const Design& design, std::size_t count, RandomStream& stream) {
  require(count >= 1, "sign_flips: count must be at least 1");
  std::vector<SignVector> out(count, SignVector(design.d));
  for (auto& flips : out) {
    std::uint64_t bits = 0;
    int left = 0;
    for (auto& s : flips) {
      if (left == 0) {
        bits = stream();
        left = 64;
      }
      s = (bits & 1u) ? 1 : -1;
      bits >>= 1;
      --left;
    }
  }
  return out;
}

std::vector<SignVector> all_sign_flips(const Design& design) {
  require(design.d <= 20, "all_sign_flips: exhaustive enumeration limited to d <= 20");
  const std::size_t total = std::size_t{1} << design.d;
  std::vector<SignVector> out(total, SignVector(design.d));
  for (std::size_t code = 0; code < total; ++code)
    for (std::size_t k = 0; k < design.d; ++k) out[code][k] = ((code >> k) & 1u) ? -1 : 1;
  return out;
}

void check_scheme(const Design& design, PermutationScheme scheme) {
  if (!design.has_groups()) fail(ErrorCode::InvalidDesign, "permutation needs group labels");
  if (scheme != PermutationScheme::C) return;
  for (const auto& rows : design.members)
    for (std::size_t i : rows)
      if (design.group[i] != design.group[rows.front()])
        fail(ErrorCode::InvalidDesign,
             "scheme C needs every cluster to be treatment-homogeneous");
}

namespace {

template <class T>
void shuffle(std::vector<T>& items, RandomStream& stream) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[stream.below(i)]);
}

// Clusters grouped by size, in increasing size order.
std::vector<std::vector<std::size_t>> size_classes(const Design& design) {
  std::map<std::size_t, std::vector<std::size_t>> by_size;
  for (std::size_t k = 0; k < design.d; ++k) by_size[design.cluster_sizes[k]].push_back(k);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [size, ks] : by_size) out.push_back(std::move(ks));
  return out;
}

void shuffle_within_clusters(const Design& design, std::vector<int>& labels, RandomStream& stream) {
  std::vector<int> buf;
  for (const auto& rows : design.members) {
    buf.clear();
    for (std::size_t i : rows) buf.push_back(labels[i]);
    shuffle(buf, stream);
    for (std::size_t j = 0; j < rows.size(); ++j) labels[rows[j]] = buf[j];
  }
}

}  // namespace

std::vector<int> draw_permutation(const Design& design, PermutationScheme scheme,
                                  RandomStream& stream) {
  std::vector<int> labels = design.group;
  switch (scheme) {
    case PermutationScheme::B:
      shuffle_within_clusters(design, labels, stream);
      break;
    case PermutationScheme::C:
    case PermutationScheme::A: {
      // Exchange whole label patterns between clusters of equal size.
      for (const auto& ks : size_classes(design)) {
        std::vector<std::size_t> order = ks;
        shuffle(order, stream);
        for (std::size_t j = 0; j < ks.size(); ++j) {
          const auto& dst = design.members[ks[j]];
          const auto& src = design.members[order[j]];
          for (std::size_t r = 0; r < dst.size(); ++r) labels[dst[r]] = design.group[src[r]];
        }
      }
      if (scheme == PermutationScheme::A) shuffle_within_clusters(design, labels, stream);
      break;
    }
  }
  return labels;
}

std::vector<std::vector<int>> permutations(const Design& design, PermutationScheme scheme,
                                           std::size_t count, RandomStream& stream) {
  require(count >= 1, "permutations: count must be at least 1");
  check_scheme(design, scheme);
  std::vector<std::vector<int>> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) out.push_back(draw_permutation(design, scheme, stream));
  return out;
}

namespace {

using Column = std::vector<std::size_t>;

// Columns of the table after reordering rows by `rows`, sorted.
std::vector<Column> sorted_columns(const Table& t, const std::vector<std::size_t>& rows) {
  const std::size_t d = t.empty() ? 0 : t[0].size();
  std::vector<Column> cols(d, Column(rows.size()));
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t r = 0; r < rows.size(); ++r) cols[j][r] = t[rows[r]][j];
  std::sort(cols.begin(), cols.end());
  return cols;
}

Table from_columns(const std::vector<Column>& cols, std::size_t c) {
  Table out(c, std::vector<std::size_t>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t r = 0; r < c; ++r) out[r][j] = cols[j][r];
  return out;
}

constexpr std::size_t kExactRowLimit = 8;

}  // namespace

// For up to eight rows every row order is tried and the column-sorted result
// with the smallest lexicographic form wins, which is an exact canonical form.
// Larger tables fall back to alternating column/row sorts until a fixpoint.
Table canonical_table(const Table& table) {
  const std::size_t c = table.size();
  if (c == 0) return table;
  std::vector<std::size_t> rows(c);
  std::iota(rows.begin(), rows.end(), 0);
  if (c <= kExactRowLimit) {
    std::vector<Column> best;
    bool first = true;
    do {
      auto cols = sorted_columns(table, rows);
      if (first || cols < best) {
        best = std::move(cols);
        first = false;
      }
    } while (std::next_permutation(rows.begin(), rows.end()));
    return from_columns(best, c);
  }
  Table current = table;
  for (int it = 0; it < 1000; ++it) {
    Table next = from_columns(sorted_columns(current, rows), c);
    std::sort(next.begin(), next.end());
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

bool equivalent_in_structure(const Table& t1, const Table& t2) {
  require(t1.size() == t2.size(), "equivalent_in_structure: group counts differ");
  if (t1.empty()) return true;
  require(t1[0].size() == t2[0].size(), "equivalent_in_structure: cluster counts differ");
  return canonical_table(t1) == canonical_table(t2);
}

bool equivalent_in_structure(std::span<const int> groups1, std::span<const int> clusters1,
                             std::span<const int> groups2, std::span<const int> clusters2) {
  require(groups1.size() == clusters1.size() && groups2.size() == clusters2.size() &&
              groups1.size() == groups2.size(),
          "equivalent_in_structure: observation counts differ");
  const Design a = build_design(clusters1, groups1);
  const Design b = build_design(clusters2, groups2);
  require(a.c == b.c && a.d == b.d, "equivalent_in_structure: dimension mismatch");
  return equivalent_in_structure(a.contingency, b.contingency);
}

}  // namespace clustloc
