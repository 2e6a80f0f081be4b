#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "clustloc/design.hpp"
#include "clustloc/efficiency.hpp"
#include "clustloc/random.hpp"

namespace clustloc {

enum class TestId { H, S, R, WH, WS, WR };

const char* to_string(TestId test);
TestId parse_test_id(const std::string& text);
ScoreKind score_of(TestId test);
bool is_weighted(TestId test);
const std::vector<TestId>& all_tests();

/// Scale s of the default effect delta = s (1, ..., 1): chosen so that the
/// asymptotic power of the unweighted sign test is 0.792 in Design B at
/// rho = 0.05, nu = 3, p = 3 with the default cluster sizes.
inline constexpr double kDefaultDeltaScale = 2.1785;

struct SimConfig {
  std::size_t d = 30;
  std::vector<std::size_t> cluster_sizes{2, 8};  // cycled over the clusters
  int p = 3;
  double nu = std::numeric_limits<double>::infinity();
  double rho = 0.0;
  PermutationScheme scheme = PermutationScheme::B;
  Matrix delta0;  // p x 2; empty means the default (delta, -delta)
  std::size_t reps = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::vector<TestId> tests = all_tests();
  bool run_alternative = true;
  unsigned threads = 1;
};

void validate(const SimConfig& cfg);
/// Delta0 with the default filled in.
Matrix effective_delta0(const SimConfig& cfg);
/// Cluster ids of every unit and the fixed group labels for designs B and C.
Design simulation_design(const SimConfig& cfg, RandomStream* stream = nullptr);

struct SimulatedPair {
  DataSet null_data;
  DataSet alt_data;  // same errors plus Delta' x, Delta = Delta0 / sqrt(n)
  Design design;
};

/// Responses y = Delta' x + (b_k + e) / sqrt(g_k), b_k ~ N(0, rho I),
/// e ~ N(0, (1 - rho) I), g_k ~ chi2_nu / nu (g = 1 for nu = infinity).
/// Design A labels are drawn per unit from the same stream first.
SimulatedPair generate_pair(const SimConfig& cfg, RandomStream& stream);
DataSet generate_dataset(const SimConfig& cfg, RandomStream& stream);

// Per replication: 1 rejected, 0 not rejected, -1 the test failed.
struct TestOutcome {
  TestId test = TestId::H;
  std::vector<signed char> null_decisions;
  std::vector<signed char> alt_decisions;
  std::size_t null_rejections = 0;
  std::size_t alt_rejections = 0;
  std::size_t null_failures = 0;
  std::size_t alt_failures = 0;
  double null_rate() const;
  double alt_rate() const;
  double null_se() const;
  double alt_se() const;
};

struct StudyCell {
  SimConfig config;
  std::vector<TestOutcome> outcomes;
  const TestOutcome& outcome(TestId test) const;
};

StudyCell run_cell(const SimConfig& cfg);

/// Runs each cell in order. With a checkpoint path, finished cells are read
/// back from (and new ones appended to) a JSON-lines file keyed by the config.
std::vector<StudyCell> run_table(const std::vector<SimConfig>& grid,
                                 const std::optional<std::string>& checkpoint = std::nullopt);

/// Tab-separated rows: design nu rho test null_or_alt rejection_rate mc_se reps seed failures
std::string tsv_header();
std::string to_tsv(const StudyCell& cell);

/// Delta scale giving the target asymptotic power for the unweighted sign
/// test in the anchor configuration (computed from model moments).
double analytic_delta_scale(double target_power = 0.792, double alpha = 0.05,
                            std::size_t draws = 2000000);

}  // namespace clustloc
