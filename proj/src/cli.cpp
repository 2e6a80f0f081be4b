#include "clustloc/cli.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "clustloc/design.hpp"
#include "clustloc/efficiency.hpp"
#include "clustloc/io.hpp"
#include "clustloc/multisample.hpp"
#include "clustloc/onesample.hpp"
#include "clustloc/sim.hpp"

namespace clustloc {

const char* to_string(Command command) {
  switch (command) {
    case Command::TestOne: return "test-one";
    case Command::TestGroups: return "test-groups";
    case Command::Estimate: return "estimate";
    case Command::Weights: return "weights";
    case Command::Are: return "are";
    case Command::Simulate: return "simulate";
  }
  return "?";
}

Command parse_command(const std::string& text) {
  for (Command c : {Command::TestOne, Command::TestGroups, Command::Estimate, Command::Weights,
                    Command::Are, Command::Simulate})
    if (text == to_string(c)) return c;
  fail(ErrorCode::InvalidArgument, "unknown command '" + text + "'");
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::EstimationFailure:
    case ErrorCode::InternalError: return 3;
    default: return 2;
  }
}

void validate(const AnalysisRequest& r) {
  const bool needs_input = r.command == Command::TestOne || r.command == Command::TestGroups ||
                           r.command == Command::Estimate || r.command == Command::Weights;
  require(!needs_input || !r.input.empty(), std::string(to_string(r.command)) + ": --input is required");
  require(r.format == "tsv" || r.format == "json", "--format must be tsv or json");
  require(r.alpha > 0.0 && r.alpha < 1.0, "--alpha must be in (0, 1)");
  require(r.resample == "none" || r.resample == "sign" || r.resample == "permA" ||
              r.resample == "permB" || r.resample == "permC",
          "--resample must be sign, permA, permB or permC");
  if (r.resample != "none") require(r.reps >= 99, "--reps must be at least 99 when resampling");
  if (r.command == Command::TestOne) {
    require(is_odd(r.score), "test-one needs an odd score (identity, sign or signed-rank)");
    require(r.resample == "none" || r.resample == "sign", "test-one resamples by sign changes only");
  }
  if (r.command == Command::TestGroups) {
    require(r.score != ScoreKind::SignedRank, "test-groups uses identity, sign or rank scores");
    require(r.resample == "none" || r.resample.rfind("perm", 0) == 0,
            "test-groups resamples by permutation (permA, permB or permC)");
  }
  if (r.rho) require(*r.rho >= 0.0 && *r.rho < 1.0, "--rho must be in [0, 1)");
  require(r.threads >= 1, "--threads must be positive");
}

namespace {

using Value = std::variant<double, long long, std::string>;
using Record = std::pair<std::string, Value>;

std::string render(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  if (const auto* i = std::get_if<long long>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

std::string render_json(const Value& v) {
  if (const auto* d = std::get_if<double>(&v))
    return std::isfinite(*d) ? format_number(*d) : nlohmann::json(format_number(*d)).dump();
  if (const auto* i = std::get_if<long long>(&v)) return std::to_string(*i);
  return nlohmann::json(std::get<std::string>(v)).dump();
}

struct Report {
  std::vector<Record> provenance;
  std::vector<Record> fields;
  std::vector<std::string> columns;         // table output when nonempty
  std::vector<std::vector<Value>> rows;

  void add(std::string key, Value v) { fields.emplace_back(std::move(key), std::move(v)); }
  void add_vector(const std::string& key, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) add(key + "[" + std::to_string(i + 1) + "]", v[i]);
  }
  void add_matrix(const std::string& key, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        add(key + "[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]", m(i, j));
  }
};

void write_json_object(std::ostream& out, const std::vector<Record>& records, const char* indent) {
  out << "{";
  for (std::size_t i = 0; i < records.size(); ++i)
    out << (i ? "," : "") << "\n" << indent << "  " << nlohmann::json(records[i].first).dump() << ": "
        << render_json(records[i].second);
  out << "\n" << indent << "}";
}

void write(const Report& report, const std::string& format, std::ostream& out) {
  if (format == "json") {
    out << "{\n  \"provenance\": ";
    write_json_object(out, report.provenance, "  ");
    if (!report.columns.empty()) {
      out << ",\n  \"rows\": [";
      for (std::size_t r = 0; r < report.rows.size(); ++r) {
        std::vector<Record> rec;
        for (std::size_t c = 0; c < report.columns.size(); ++c) rec.emplace_back(report.columns[c], report.rows[r][c]);
        out << (r ? "," : "") << "\n    ";
        write_json_object(out, rec, "    ");
      }
      out << "\n  ]";
    } else {
      out << ",\n  \"results\": ";
      write_json_object(out, report.fields, "  ");
    }
    out << "\n}\n";
    return;
  }
  for (const auto& [k, v] : report.provenance) out << "# " << k << '\t' << render(v) << '\n';
  if (!report.columns.empty()) {
    for (std::size_t c = 0; c < report.columns.size(); ++c) out << (c ? "\t" : "") << report.columns[c];
    out << '\n';
    for (const auto& row : report.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "\t" : "") << render(row[c]);
      out << '\n';
    }
    return;
  }
  out << "field\tvalue\n";
  for (const auto& [k, v] : report.fields) out << k << '\t' << render(v) << '\n';
}

std::string fnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 1099511628211ull;
  }
  std::ostringstream s;
  s << std::hex << h;
  return s.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

void base_provenance(Report& rep, const AnalysisRequest& r) {
  rep.provenance = {{"program", std::string("clustloc")},
                    {"version", std::string(kVersion)},
                    {"generator", std::string(RandomStream::generator_name)},
                    {"seed", static_cast<long long>(r.seed)},
                    {"command", std::string(to_string(r.command))}};
}

void data_provenance(Report& rep, const AnalysisRequest& r) {
  rep.provenance.emplace_back("input", r.input);
  rep.provenance.emplace_back("input_fnv1a64", fnv1a64(r.input));
  rep.provenance.emplace_back("score", std::string(to_string(r.score)));
  rep.provenance.emplace_back("weights", r.weights);
  rep.provenance.emplace_back("resample", r.resample);
  rep.provenance.emplace_back("reps", static_cast<long long>(r.resample == "none" ? 0 : r.reps));
  rep.provenance.emplace_back("alpha", r.alpha);
}

// Scores under the null fit with unit weights, for the two-stage rho.
double two_stage_rho(const Matrix& y, const Design& design, ScoreKind kind, bool grouped) {
  const WeightVector unit = WeightVector::unit(design.n);
  Matrix scores;
  if (grouped) {
    scores = centered_scores(y, design, unit, kind).scores;
  } else {
    const LocationEstimate est = estimate_location(y, design, unit, kind);
    const Matrix resid = y.rowwise() - est.mu_hat.transpose();
    scores = kind == ScoreKind::Identity ? resid
             : kind == ScoreKind::Sign   ? spatial_signs(resid)
                                         : spatial_signed_ranks(resid);
  }
  const BCEstimate bc = estimate_bc(scores, design, unit);
  return estimate_rho(bc.B, bc.C);
}

struct Loaded {
  DataSet data;
  Design design;
};

Loaded load(const AnalysisRequest& r) {
  Loaded l;
  l.data = ingest_csv(r.input);
  l.design = build_design(l.data);
  return l;
}

WeightVector resolve_weights(const AnalysisRequest& r, const Loaded& l, ScoreKind kind, bool grouped,
                             Report& rep) {
  if (r.weights == "none") return WeightVector::unit(l.design.n);
  if (r.weights == "optimal") {
    const double rho = r.rho ? *r.rho : two_stage_rho(l.data.y, l.design, kind, grouped);
    rep.provenance.emplace_back("rho_source", std::string(r.rho ? "given" : "two-stage"));
    rep.add("rho", rho);
    return grouped ? optimal_weights_two_sample(l.design, rho)
                   : optimal_weights_one_sample(l.design, rho);
  }
  rep.provenance.emplace_back("weights_fnv1a64", fnv1a64(r.weights));
  return WeightVector(read_weights(r.weights, l.design.n));
}

void add_test(Report& rep, const TestResult& t, double alpha) {
  rep.add("statistic", t.statistic);
  rep.add("df", static_cast<long long>(t.df));
  rep.add("p_asymptotic", t.p_asymptotic);
  rep.add("reject_asymptotic", static_cast<long long>(t.p_asymptotic <= alpha));
  if (t.p_resampling) {
    rep.add("p_resampling", *t.p_resampling);
    rep.add("resampling_reps", static_cast<long long>(t.resampling_reps));
    rep.add("reject_resampling", static_cast<long long>(*t.p_resampling <= alpha));
  }
  rep.add("rank_deficient", static_cast<long long>(t.rank_deficient));
  rep.add("c_term_dropped", static_cast<long long>(t.c_term_dropped));
  rep.add_vector("weight", t.weights_used);
}

void run_test_one(const AnalysisRequest& r, Report& rep) {
  const Loaded l = load(r);
  const WeightVector w = resolve_weights(r, l, r.score, false, rep);
  TestResult t = one_sample_test(l.data.y, l.design, w, r.score);
  if (r.resample == "sign") {
    RandomStream stream(r.seed);
    SignChangeOptions opts;
    opts.reps = r.reps;
    opts.threads = r.threads;
    t.p_resampling = sign_change_pvalue(l.data.y, l.design, w, r.score, stream, opts);
    t.resampling_reps = r.reps;
  }
  add_test(rep, t, r.alpha);
}

void run_test_groups(const AnalysisRequest& r, Report& rep) {
  const Loaded l = load(r);
  require(l.design.has_groups(), "test-groups: the input has no 'group' column");
  const WeightVector w = resolve_weights(r, l, r.score, true, rep);
  TestResult t = c_sample_test(l.data.y, l.design, w, r.score);
  if (r.resample != "none") {
    RandomStream stream(r.seed);
    PermutationOptions opts;
    opts.reps = r.reps;
    opts.threads = r.threads;
    t.p_resampling = permutation_pvalue(l.data.y, l.design, w, r.score,
                                        parse_scheme(r.resample.substr(4)), stream, opts);
    t.resampling_reps = r.reps;
  }
  add_test(rep, t, r.alpha);
}

void run_estimate(const AnalysisRequest& r, Report& rep) {
  const Loaded l = load(r);
  const bool grouped = l.design.has_groups();
  const WeightVector w = resolve_weights(r, l, r.score, grouped, rep);
  const double n = static_cast<double>(l.design.n);
  if (!grouped) {
    const LocationEstimate est = estimate_location(l.data.y, l.design, w, r.score);
    rep.add_vector("mu_hat", est.mu_hat);
    rep.add_matrix("covariance", est.covariance / n);
    rep.add_matrix("a_hat", est.a_hat);
    rep.add("iterations", static_cast<long long>(est.iterations));
    rep.add("converged", static_cast<long long>(est.converged));
    rep.add("degraded", static_cast<long long>(est.degraded));
    rep.add("residual", est.residual);
    return;
  }
  const GroupEstimates est = estimate_groups(l.data.y, l.design, w, r.score);
  rep.add_matrix("beta_hat", est.beta);
  for (const auto& pd : est.pairs) {
    const std::string tag = "(" + std::to_string(pd.i + 1) + "," + std::to_string(pd.j + 1) + ")";
    rep.add_vector("theta" + tag, pd.theta);
    rep.add_matrix("covariance" + tag, pd.covariance);
    rep.add_matrix("covariance_alt" + tag, pd.covariance_alt);
    rep.add("gamma_B" + tag, pd.gamma_B);
    rep.add("gamma_C" + tag, pd.gamma_C);
    rep.add("alt_preferred" + tag, static_cast<long long>(pd.alt_preferred));
  }
}

void run_weights(const AnalysisRequest& r, Report& rep) {
  require(r.weights == "optimal" || r.weights == "none" || !r.weights.empty(), "weights: bad mode");
  AnalysisRequest q = r;
  if (q.weights == "none") q.weights = "optimal";
  const Loaded l = load(q);
  const bool grouped = l.design.has_groups();
  ScoreKind kind = r.score;
  if (!grouped && !is_odd(kind)) kind = ScoreKind::Sign;
  if (grouped && kind == ScoreKind::SignedRank) kind = ScoreKind::Sign;
  const WeightVector w = resolve_weights(q, l, kind, grouped, rep);
  rep.columns = {"row", "cluster", "group", "weight"};
  for (std::size_t i = 0; i < l.design.n; ++i)
    rep.rows.push_back({static_cast<long long>(i + 1), l.data.cluster_labels[i],
                        grouped ? l.data.group_labels[i] : std::string(), w[i]});
  for (const auto& [k, v] : rep.fields) rep.provenance.emplace_back(k, v);
}

std::vector<double> rho_list(const AnalysisRequest& r, std::vector<double> fallback) {
  return r.rhos.empty() ? fallback : r.rhos;
}

void run_are(const AnalysisRequest& r, Report& rep) {
  std::vector<ScoreKind> kinds;
  for (const auto& k : r.kinds) kinds.push_back(parse_score_kind(k));
  const auto rhos = rho_list(r, default_rho_grid());
  AreOptions opts;
  opts.draws = r.draws;
  opts.seed = r.seed;
  opts.threads = r.threads;
  rep.provenance.emplace_back("p", static_cast<long long>(r.p));
  rep.provenance.emplace_back("cluster_sizes", join(r.sizes));
  rep.provenance.emplace_back("draws", static_cast<long long>(r.draws));
  rep.provenance.emplace_back("batches", static_cast<long long>(opts.batches));
  rep.provenance.emplace_back("benchmark", std::string("unweighted identity (Hotelling)"));
  rep.provenance.emplace_back("optimal_weights", std::string("two-sample Hotelling-optimal at the model rho"));
  rep.columns = {"design", "kind", "weighting", "nu", "rho", "are", "mc_se"};
  for (const auto& dname : r.designs) {
    IdealDesignSpec spec;
    spec.scheme = parse_scheme(dname);
    spec.sizes = r.sizes;
    for (double nu : r.nus) {
      std::vector<PopulationModel> models;
      for (double rho : rhos) {
        PopulationModel m;
        m.p = r.p;
        m.family = std::isinf(nu) ? Family::Normal : Family::T;
        m.nu = nu;
        m.rho = rho;
        models.push_back(m);
      }
      for (const auto& row : are_curve(models, spec, kinds, {Weighting::Unweighted, Weighting::Optimal}, opts))
        rep.rows.push_back({std::string(to_string(row.scheme)), std::string(to_string(row.kind)),
                            std::string(to_string(row.weighting)), row.model.nu, row.model.rho, row.are,
                            row.mc_se});
    }
  }
}

void run_simulate(const AnalysisRequest& r, Report& rep, std::ostream& out) {
  std::vector<TestId> tests;
  for (const auto& t : r.tests) tests.push_back(parse_test_id(t));
  std::vector<SimConfig> grid;
  for (const auto& dname : r.designs)
    for (double nu : r.nus)
      for (double rho : rho_list(r, {0.05})) {
        SimConfig cfg;
        cfg.d = r.d;
        cfg.cluster_sizes = r.sizes;
        cfg.p = r.p;
        cfg.nu = nu;
        cfg.rho = rho;
        cfg.scheme = parse_scheme(dname);
        const double s = r.delta_scale ? *r.delta_scale : kDefaultDeltaScale;
        cfg.delta0 = Matrix(cfg.p, 2);
        cfg.delta0.col(0).setConstant(s);
        cfg.delta0.col(1).setConstant(-s);
        cfg.reps = r.reps;
        cfg.alpha = r.alpha;
        cfg.seed = r.seed;
        cfg.tests = tests;
        cfg.run_alternative = !r.null_only;
        cfg.threads = r.threads;
        grid.push_back(cfg);
      }
  rep.provenance.emplace_back("d", static_cast<long long>(r.d));
  rep.provenance.emplace_back("cluster_sizes", join(r.sizes));
  rep.provenance.emplace_back("p", static_cast<long long>(r.p));
  rep.provenance.emplace_back("delta_scale", r.delta_scale ? *r.delta_scale : kDefaultDeltaScale);
  rep.provenance.emplace_back("effect", std::string("Delta = Delta0 / sqrt(n), n = total sample size"));
  rep.provenance.emplace_back("weights", std::string("two-sample Hotelling-optimal at the true rho"));
  rep.provenance.emplace_back("reps", static_cast<long long>(r.reps));
  rep.provenance.emplace_back("alpha", r.alpha);
  const auto cells = run_table(grid, r.checkpoint.empty() ? std::nullopt : std::optional(r.checkpoint));
  if (r.format == "tsv") {
    for (const auto& [k, v] : rep.provenance) out << "# " << k << '\t' << render(v) << '\n';
    out << tsv_header();
    for (const auto& c : cells) out << to_tsv(c);
    return;
  }
  // JSON rows carry the same fields as the TSV.
  rep.columns = {"design", "nu", "rho", "test", "null_or_alt", "rejection_rate", "mc_se", "reps", "seed", "failures"};
  for (const auto& c : cells)
    for (const auto& o : c.outcomes)
      for (int alt = 0; alt < 2; ++alt)
        rep.rows.push_back({std::string(to_string(c.config.scheme)), c.config.nu, c.config.rho,
                            std::string(to_string(o.test)), std::string(alt ? "alt" : "null"),
                            alt ? o.alt_rate() : o.null_rate(), alt ? o.alt_se() : o.null_se(),
                            static_cast<long long>(c.config.reps), static_cast<long long>(c.config.seed),
                            static_cast<long long>(alt ? o.alt_failures : o.null_failures)});
  write(rep, r.format, out);
}

}  // namespace

int run(const AnalysisRequest& request, std::ostream& out, std::ostream& err) {
  try {
    validate(request);
    Report rep;
    base_provenance(rep, request);
    switch (request.command) {
      case Command::TestOne:
        data_provenance(rep, request);
        run_test_one(request, rep);
        break;
      case Command::TestGroups:
        data_provenance(rep, request);
        run_test_groups(request, rep);
        break;
      case Command::Estimate:
        data_provenance(rep, request);
        run_estimate(request, rep);
        break;
      case Command::Weights:
        data_provenance(rep, request);
        run_weights(request, rep);
        break;
      case Command::Are:
        run_are(request, rep);
        break;
      case Command::Simulate:
        run_simulate(request, rep, out);
        return 0;
    }
    // Render fully before writing so that a failure leaves no partial output.
    std::ostringstream buffer;
    write(rep, request.format, buffer);
    out << buffer.str();
    return 0;
  } catch (const EstimationFailure& e) {
    err << "clustloc: estimation failure: " << e.what() << '\n';
    if (!e.residual_trace().empty())
      err << "clustloc: last residual " << format_number(e.residual_trace().back()) << '\n';
    return 3;
  } catch (const Error& e) {
    err << "clustloc: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "clustloc: internal error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace clustloc
