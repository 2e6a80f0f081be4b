#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clustloc/cli.hpp"
#include "clustloc/parallel.hpp"

namespace {

double parse_real(const std::string& text) {
  if (text == "inf" || text == "Inf" || text == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument(text);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  using clustloc::AnalysisRequest;
  AnalysisRequest req;
  req.threads = clustloc::default_threads();

  CLI::App app{"Location tests and estimates for clustered multivariate data"};
  std::string command, score = "sign";
  std::optional<double> rho_opt;
  std::vector<std::string> nus{"inf"}, rhos;
  std::optional<double> delta_scale;
  app.add_option("command", command, "test-one | test-groups | estimate | weights | are | simulate")
      ->required()
      ->check(CLI::IsMember({"test-one", "test-groups", "estimate", "weights", "are", "simulate"}));
  app.add_option("--input", req.input, "CSV file with a cluster column, optional group column and responses");
  app.add_option("--score", score, "identity | sign | rank | signed-rank")
      ->check(CLI::IsMember({"identity", "sign", "rank", "signed-rank"}));
  app.add_option("--weights", req.weights, "none | optimal | FILE");
  app.add_option("--rho", rho_opt, "intracluster correlation for optimal weights (skips estimation)");
  app.add_option("--resample", req.resample, "sign | permA | permB | permC");
  app.add_option("--reps", req.reps, "resampling or simulation replications");
  app.add_option("--alpha", req.alpha, "test level");
  app.add_option("--seed", req.seed, "random seed");
  app.add_option("--format", req.format, "tsv | json")->check(CLI::IsMember({"tsv", "json"}));
  app.add_option("--threads", req.threads, "worker threads");
  app.add_option("--design", req.designs, "A, B and/or C (are, simulate)")->delimiter(',');
  app.add_option("--sizes", req.sizes, "cluster sizes, cycled over clusters (are, simulate)")->delimiter(',');
  app.add_option("--p", req.p, "response dimension (are, simulate)");
  app.add_option("--nu", nus, "t degrees of freedom, inf for normal (are, simulate)")->delimiter(',');
  app.add_option("--rho-grid", rhos, "intracluster correlations (are, simulate)")->delimiter(',');
  app.add_option("--kinds", req.kinds, "score kinds for are")->delimiter(',');
  app.add_option("--draws", req.draws, "Monte Carlo draws for score moments (are)");
  app.add_option("--clusters", req.d, "number of clusters (simulate)");
  app.add_option("--delta-scale", delta_scale, "effect scale s, Delta0 = (s1, -s1) (simulate)");
  app.add_option("--tests", req.tests, "subset of H,S,R,WH,WS,WR (simulate)")->delimiter(',');
  app.add_option("--checkpoint", req.checkpoint, "JSON-lines checkpoint file (simulate)");
  app.add_flag("--null-only", req.null_only, "skip the alternative datasets (simulate)");

  try {
    app.parse(argc, argv);
    req.command = clustloc::parse_command(command);
    req.score = clustloc::parse_score_kind(score);
    req.rho = rho_opt;
    req.delta_scale = delta_scale;
    req.nus.clear();
    for (const auto& s : nus) req.nus.push_back(parse_real(s));
    for (const auto& s : rhos) req.rhos.push_back(parse_real(s));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "clustloc: invalid argument: " << e.what() << '\n';
    return 2;
  }
  return clustloc::run(req, std::cout, std::cerr);
}
