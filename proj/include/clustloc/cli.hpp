#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clustloc/errors.hpp"
#include "clustloc/scores.hpp"

namespace clustloc {

inline constexpr const char* kVersion = "1.0.0";

enum class Command { TestOne, TestGroups, Estimate, Weights, Are, Simulate };

const char* to_string(Command command);
Command parse_command(const std::string& text);

struct AnalysisRequest {
  Command command = Command::TestOne;
  std::string input;
  ScoreKind score = ScoreKind::Sign;
  std::string weights = "none";  // none | optimal | path to a weight file
  std::optional<double> rho;     // skips the two-stage estimate
  std::string resample = "none"; // none | sign | permA | permB | permC
  std::size_t reps = 999;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string format = "tsv";    // tsv | json
  unsigned threads = 1;

  // are and simulate
  std::vector<std::string> designs{"B"};
  std::vector<std::size_t> sizes{2, 8};
  int p = 3;
  std::vector<double> nus{std::numeric_limits<double>::infinity()};
  std::vector<double> rhos;  // empty: command default
  std::vector<std::string> kinds{"identity", "sign", "rank"};
  std::size_t draws = 400000;

  // simulate
  std::size_t d = 30;
  std::optional<double> delta_scale;
  std::vector<std::string> tests{"H", "S", "R", "WH", "WS", "WR"};
  std::string checkpoint;
  bool null_only = false;
};

/// Throws InvalidArgument when command-specific fields are missing or out of range.
void validate(const AnalysisRequest& request);

/// 0 success, 2 data or request error, 3 numerical failure. Machine output
/// goes to `out`, diagnostics to `err`.
int run(const AnalysisRequest& request, std::ostream& out, std::ostream& err);

int exit_code(ErrorCode code);

}  // namespace clustloc
