#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace clustloc {

enum class ErrorCode {
  InvalidArgument,
  DegenerateInput,
  DegenerateDesign,
  UnsupportedDesign,
  InvalidDesign,
  EstimationFailure,
  MomentNonexistence,
  FormatError,
  InternalError,
};

const char* to_string(ErrorCode code);

// Base of every error raised by the library. The code tells callers (the CLI
// in particular) which class of failure occurred.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Iterative location solve that did not reach its tolerance. Carries the
// residual trace and the last iterate so callers can inspect what happened.
class EstimationFailure : public Error {
 public:
  EstimationFailure(const std::string& what, std::vector<double> residual_trace,
                    std::vector<double> last_iterate)
      : Error(ErrorCode::EstimationFailure, what),
        residual_trace_(std::move(residual_trace)),
        last_iterate_(std::move(last_iterate)) {}

  const std::vector<double>& residual_trace() const { return residual_trace_; }
  const std::vector<double>& last_iterate() const { return last_iterate_; }

 private:
  std::vector<double> residual_trace_;
  std::vector<double> last_iterate_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCode::InvalidArgument, what);
}

}  // namespace clustloc
