#pragma once

#include "otwb/instances.hpp"
#include "otwb/trace.hpp"

#include <json.hpp>

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace otwb {

inline constexpr int kExitCertified = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitNotConverged = 2;
inline constexpr int kExitUsage = 64;

struct SolveFlags {
  std::string method = "gamma-hpd-ls-fm";
  double eps = 0.01;
  std::string gamma = "auto";  // "auto" or a number
  std::optional<double> beta1_mult;
  double rho = 0.99;
  double delta = 0.01;
  std::string penalty = "quad:1e6";
  bool fixed_marginal = false;
  std::optional<long> max_iter;
  std::uint64_t seed = 0;
};

struct SolveOutcome {
  nlohmann::json report;
  std::vector<TraceRow> trace;
  bool converged = false;
  double gap = 0.0;
  long iterations = 0;
  long inner_total = 0;
};

/// Method names accepted for each instance kind.
const std::vector<std::string>& ot_methods();
const std::vector<std::string>& wb_methods();
const std::vector<std::string>& unbalanced_methods();

/// Runs one method on one instance. Throws UsageError for an unknown method
/// or a method that does not fit the instance kind.
SolveOutcome run_method(const AnyInstance& inst, const SolveFlags& flags);

/// Entry point shared by the executable and the tests; returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace otwb
