#include "clustloc/sim.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "clustloc/errors.hpp"
#include "clustloc/multisample.hpp"
#include "clustloc/parallel.hpp"

namespace clustloc {

const char* to_string(TestId test) {
  switch (test) {
    case TestId::H: return "H";
    case TestId::S: return "S";
    case TestId::R: return "R";
    case TestId::WH: return "WH";
    case TestId::WS: return "WS";
    case TestId::WR: return "WR";
  }
  return "?";
}

TestId parse_test_id(const std::string& text) {
  for (TestId t : all_tests())
    if (text == to_string(t)) return t;
  fail(ErrorCode::InvalidArgument, "unknown test '" + text + "' (expected H, S, R, WH, WS or WR)");
}

ScoreKind score_of(TestId test) {
  switch (test) {
    case TestId::H:
    case TestId::WH: return ScoreKind::Identity;
    case TestId::S:
    case TestId::WS: return ScoreKind::Sign;
    case TestId::R:
    case TestId::WR: return ScoreKind::Rank;
  }
  return ScoreKind::Identity;
}

bool is_weighted(TestId test) { return test == TestId::WH || test == TestId::WS || test == TestId::WR; }

const std::vector<TestId>& all_tests() {
  static const std::vector<TestId> tests{TestId::H, TestId::S, TestId::R,
                                         TestId::WH, TestId::WS, TestId::WR};
  return tests;
}

void validate(const SimConfig& cfg) {
  require(cfg.d >= 2, "SimConfig: need at least two clusters");
  require(!cfg.cluster_sizes.empty(), "SimConfig: cluster sizes missing");
  for (std::size_t m : cfg.cluster_sizes) require(m >= 1, "SimConfig: cluster sizes must be positive");
  require(cfg.p >= 1, "SimConfig: p must be positive");
  require(cfg.nu > 0.0, "SimConfig: nu must be positive");
  require(cfg.rho >= 0.0 && cfg.rho < 1.0, "SimConfig: rho must be in [0, 1)");
  require(cfg.reps >= 1, "SimConfig: reps must be at least 1");
  require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "SimConfig: alpha must be in (0, 1)");
  require(cfg.delta0.size() == 0 || (cfg.delta0.rows() == cfg.p && cfg.delta0.cols() == 2),
          "SimConfig: Delta0 must be p x 2");
  require(!cfg.tests.empty(), "SimConfig: no tests selected");
}

Matrix effective_delta0(const SimConfig& cfg) {
  if (cfg.delta0.size() != 0) return cfg.delta0;
  Matrix d0(cfg.p, 2);
  d0.col(0).setConstant(kDefaultDeltaScale);
  d0.col(1).setConstant(-kDefaultDeltaScale);
  return d0;
}

namespace {

std::size_t size_of_cluster(const SimConfig& cfg, std::size_t k) {
  return cfg.cluster_sizes[k % cfg.cluster_sizes.size()];
}

}  // namespace

Design simulation_design(const SimConfig& cfg, RandomStream* stream) {
  validate(cfg);
  std::vector<int> clusters, groups;
  const std::size_t period = cfg.cluster_sizes.size();
  std::size_t odd_seen = 0;
  for (std::size_t k = 0; k < cfg.d; ++k) {
    const std::size_t m = size_of_cluster(cfg, k);
    const std::size_t extra = m % 2 ? odd_seen++ % 2 : 0;
    for (std::size_t u = 0; u < m; ++u) {
      clusters.push_back(static_cast<int>(k));
      switch (cfg.scheme) {
        case PermutationScheme::A:
          require(stream != nullptr, "simulation_design: design A draws labels from a stream");
          groups.push_back(static_cast<int>(stream->below(2)));
          break;
        case PermutationScheme::B:
          // Odd-size clusters alternate which group gets the extra member.
          groups.push_back(u < (m + extra) / 2 ? 0 : 1);
          break;
        case PermutationScheme::C:
          // Whole size patterns alternate between groups so both groups see every size.
          groups.push_back(static_cast<int>((k / period) % 2));
          break;
      }
    }
  }
  // A draw with an empty group cannot be analysed; relabel one unit.
  if (cfg.scheme == PermutationScheme::A) {
    bool has0 = false, has1 = false;
    for (int g : groups) (g == 0 ? has0 : has1) = true;
    if (!has0) groups.front() = 0;
    if (!has1) groups.back() = 1;
  }
  // Codes are kept as drawn so that group 0 is always the first treatment.
  const Design design = with_groups(build_design(std::span<const int>(clusters)), groups);
  return design;
}

SimulatedPair generate_pair(const SimConfig& cfg, RandomStream& stream) {
  SimulatedPair out;
  out.design = simulation_design(cfg, cfg.scheme == PermutationScheme::A ? &stream : nullptr);
  const auto n = static_cast<Eigen::Index>(out.design.n);
  const bool normal = std::isinf(cfg.nu);
  Matrix errors(n, cfg.p);
  const double sd_b = std::sqrt(cfg.rho);
  const double sd_e = std::sqrt(1.0 - cfg.rho);
  Vector b(cfg.p);
  for (const auto& rows : out.design.members) {
    for (int j = 0; j < cfg.p; ++j) b[j] = sd_b * stream.normal();
    const double scale = normal ? 1.0 : 1.0 / std::sqrt(stream.chi_squared(cfg.nu) / cfg.nu);
    for (std::size_t i : rows)
      for (int j = 0; j < cfg.p; ++j)
        errors(static_cast<Eigen::Index>(i), j) = scale * (b[j] + sd_e * stream.normal());
  }

  auto make = [&](const Matrix& y) {
    DataSet data;
    data.y = y;
    for (std::size_t i = 0; i < out.design.n; ++i) {
      data.cluster_labels.push_back(std::to_string(out.design.cluster[i]));
      data.group_labels.push_back(std::to_string(out.design.group[i]));
    }
    for (int j = 0; j < cfg.p; ++j) data.response_names.push_back("y" + std::to_string(j + 1));
    return data;
  };
  out.null_data = make(errors);
  const Matrix delta = effective_delta0(cfg) / std::sqrt(static_cast<double>(n));
  Matrix shifted = errors;
  for (Eigen::Index i = 0; i < n; ++i) shifted.row(i) += delta.col(out.design.group[static_cast<std::size_t>(i)]).transpose();
  out.alt_data = make(shifted);
  return out;
}

DataSet generate_dataset(const SimConfig& cfg, RandomStream& stream) {
  return generate_pair(cfg, stream).alt_data;
}

namespace {

double rate(std::size_t hits, std::size_t total, std::size_t failures) {
  const std::size_t ok = total - failures;
  return ok == 0 ? std::numeric_limits<double>::quiet_NaN()
                 : static_cast<double>(hits) / static_cast<double>(ok);
}

double se(double f, std::size_t total, std::size_t failures) {
  const std::size_t ok = total - failures;
  return ok == 0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(f * (1.0 - f) / static_cast<double>(ok));
}

}  // namespace

double TestOutcome::null_rate() const { return rate(null_rejections, null_decisions.size(), null_failures); }
double TestOutcome::alt_rate() const { return rate(alt_rejections, alt_decisions.size(), alt_failures); }
double TestOutcome::null_se() const { return se(null_rate(), null_decisions.size(), null_failures); }
double TestOutcome::alt_se() const { return se(alt_rate(), alt_decisions.size(), alt_failures); }

const TestOutcome& StudyCell::outcome(TestId test) const {
  for (const auto& o : outcomes)
    if (o.test == test) return o;
  fail(ErrorCode::InvalidArgument, std::string("test ") + to_string(test) + " was not run in this cell");
}

StudyCell run_cell(const SimConfig& cfg) {
  validate(cfg);
  StudyCell cell;
  cell.config = cfg;
  const std::size_t nt = cfg.tests.size();
  cell.outcomes.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    cell.outcomes[t].test = cfg.tests[t];
    cell.outcomes[t].null_decisions.assign(cfg.reps, 0);
    cell.outcomes[t].alt_decisions.assign(cfg.reps, 0);
  }
  bool any_weighted = false;
  for (TestId t : cfg.tests) any_weighted = any_weighted || is_weighted(t);

  // Fixed designs share one weight vector across replications.
  std::optional<WeightVector> fixed_weights;
  if (any_weighted && cfg.scheme != PermutationScheme::A)
    fixed_weights = optimal_weights_two_sample(simulation_design(cfg), cfg.rho);

  parallel_chunks(cfg.reps, cfg.threads, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t r = begin; r < end; ++r) {
      RandomStream stream(cfg.seed, r);
      const SimulatedPair pair = generate_pair(cfg, stream);
      const WeightVector unit = WeightVector::unit(pair.design.n);
      std::optional<WeightVector> weights = fixed_weights;
      std::optional<std::string> weight_error;
      if (any_weighted && !weights) {
        try {
          weights = optimal_weights_two_sample(pair.design, cfg.rho);
        } catch (const Error& e) {
          weight_error = e.what();
        }
      }
      for (std::size_t t = 0; t < nt; ++t) {
        const TestId test = cfg.tests[t];
        auto decide = [&](const DataSet& data) -> signed char {
          if (is_weighted(test) && !weights) return -1;
          try {
            const TestResult res =
                c_sample_test(data.y, pair.design, is_weighted(test) ? *weights : unit, score_of(test));
            if (!std::isfinite(res.p_asymptotic)) return -1;
            return res.p_asymptotic <= cfg.alpha ? 1 : 0;
          } catch (const Error&) {
            return -1;
          }
        };
        auto& out = cell.outcomes[t];
        out.null_decisions[r] = decide(pair.null_data);
        out.alt_decisions[r] = cfg.run_alternative ? decide(pair.alt_data) : out.null_decisions[r];
      }
    }
  });

  for (auto& o : cell.outcomes) {
    for (std::size_t r = 0; r < cfg.reps; ++r) {
      o.null_rejections += o.null_decisions[r] == 1;
      o.null_failures += o.null_decisions[r] == -1;
      o.alt_rejections += o.alt_decisions[r] == 1;
      o.alt_failures += o.alt_decisions[r] == -1;
    }
  }
  return cell;
}

namespace {

using nlohmann::json;

json config_json(const SimConfig& cfg) {
  json j;
  j["d"] = cfg.d;
  j["cluster_sizes"] = cfg.cluster_sizes;
  j["p"] = cfg.p;
  j["nu"] = std::isinf(cfg.nu) ? json("inf") : json(cfg.nu);
  j["rho"] = cfg.rho;
  j["design"] = to_string(cfg.scheme);
  const Matrix d0 = effective_delta0(cfg);
  j["delta0"] = std::vector<double>(d0.data(), d0.data() + d0.size());
  j["reps"] = cfg.reps;
  j["alpha"] = cfg.alpha;
  j["seed"] = cfg.seed;
  std::vector<std::string> tests;
  for (TestId t : cfg.tests) tests.emplace_back(to_string(t));
  j["tests"] = tests;
  j["alternative"] = cfg.run_alternative;
  return j;
}

std::string encode(const std::vector<signed char>& decisions) {
  std::string s;
  s.reserve(decisions.size());
  for (signed char v : decisions) s.push_back(v == 1 ? '1' : v == 0 ? '0' : 'x');
  return s;
}

std::vector<signed char> decode(const std::string& s) {
  std::vector<signed char> out;
  out.reserve(s.size());
  for (char ch : s) out.push_back(ch == '1' ? 1 : ch == '0' ? 0 : -1);
  return out;
}

json cell_json(const StudyCell& cell) {
  json j;
  j["config"] = config_json(cell.config);
  for (const auto& o : cell.outcomes)
    j["outcomes"][to_string(o.test)] = {{"null", encode(o.null_decisions)}, {"alt", encode(o.alt_decisions)}};
  return j;
}

StudyCell cell_from_json(const json& j, const SimConfig& cfg) {
  StudyCell cell;
  cell.config = cfg;
  for (TestId t : cfg.tests) {
    TestOutcome o;
    o.test = t;
    const auto& entry = j.at("outcomes").at(to_string(t));
    o.null_decisions = decode(entry.at("null").get<std::string>());
    o.alt_decisions = decode(entry.at("alt").get<std::string>());
    for (std::size_t r = 0; r < o.null_decisions.size(); ++r) {
      o.null_rejections += o.null_decisions[r] == 1;
      o.null_failures += o.null_decisions[r] == -1;
      o.alt_rejections += o.alt_decisions[r] == 1;
      o.alt_failures += o.alt_decisions[r] == -1;
    }
    cell.outcomes.push_back(std::move(o));
  }
  return cell;
}

}  // namespace

std::vector<StudyCell> run_table(const std::vector<SimConfig>& grid,
                                 const std::optional<std::string>& checkpoint) {
  require(!grid.empty(), "run_table: empty grid");
  std::map<std::string, json> done;
  if (checkpoint) {
    std::ifstream in(*checkpoint);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        // A partially written final line is expected after an interruption.
        if (in.peek() == EOF) break;
        fail(ErrorCode::FormatError,
             *checkpoint + ":" + std::to_string(lineno) + ": bad checkpoint line: " + e.what());
      }
      done[j.at("config").dump()] = j;
    }
  }
  std::ofstream out;
  if (checkpoint) out.open(*checkpoint, std::ios::app);

  std::vector<StudyCell> cells;
  for (const auto& cfg : grid) {
    const std::string key = config_json(cfg).dump();
    if (auto it = done.find(key); it != done.end()) {
      cells.push_back(cell_from_json(it->second, cfg));
      continue;
    }
    cells.push_back(run_cell(cfg));
    if (checkpoint) {
      out << cell_json(cells.back()).dump() << '\n';
      out.flush();
    }
  }
  return cells;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::string tsv_header() {
  return "design\tnu\trho\ttest\tnull_or_alt\trejection_rate\tmc_se\treps\tseed\tfailures\n";
}

std::string to_tsv(const StudyCell& cell) {
  const auto& cfg = cell.config;
  std::ostringstream s;
  for (const auto& o : cell.outcomes) {
    for (int alt = 0; alt < 2; ++alt) {
      s << to_string(cfg.scheme) << '\t' << num(cfg.nu) << '\t' << num(cfg.rho) << '\t'
        << to_string(o.test) << '\t' << (alt ? "alt" : "null") << '\t'
        << num(alt ? o.alt_rate() : o.null_rate()) << '\t' << num(alt ? o.alt_se() : o.null_se())
        << '\t' << cfg.reps << '\t' << cfg.seed << '\t' << (alt ? o.alt_failures : o.null_failures)
        << '\n';
    }
  }
  return s.str();
}

double analytic_delta_scale(double target_power, double alpha, std::size_t draws) {
  require(target_power > alpha && target_power < 1.0, "analytic_delta_scale: bad target power");
  PopulationModel model;
  model.family = Family::T;
  model.nu = 3.0;
  model.rho = 0.05;
  const SimConfig defaults;
  IdealDesignSpec spec;
  spec.scheme = PermutationScheme::B;
  spec.sizes = defaults.cluster_sizes;
  const MomentBatches mb = score_moment_batches(model, ScoreKind::Sign, draws, 1, 20240601);
  const double unit = two_sample_ncp(mb.pooled, model.p, idealized_design(spec),
                                     Weighting::Unweighted, model.rho);
  const double crit = chi2_tail_inverse(alpha, model.p);
  double lo = 0.0, hi = 1.0;
  while (noncentral_chi2_tail(crit, model.p, hi) < target_power) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (noncentral_chi2_tail(crit, model.p, mid) < target_power ? lo : hi) = mid;
  }
  // Contrast between the groups is 2 s (1, ..., 1).
  return std::sqrt(0.5 * (lo + hi) / (4.0 * unit));
}

}  // namespace clustloc
