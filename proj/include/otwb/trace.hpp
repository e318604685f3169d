#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace otwb {

struct TraceRow {
  long iter = 0;
  double tau = 0.0;
  double sigma = 0.0;
  double beta = 0.0;
  double theta = 0.0;
  long inner_iters = 0;
  double gap_raw = 0.0;
  double gap_rounded = 0.0;
  double primal_value = 0.0;
  double elapsed_s = 0.0;
};

inline constexpr const char* kTraceHeader =
    "iter,tau,sigma,beta,theta,inner_iters,gap_raw,gap_rounded,primal_value,elapsed_s";

// Doubles are written with 17 significant digits so they parse back exactly.
std::string trace_to_csv(const std::vector<TraceRow>& rows);
std::vector<TraceRow> trace_from_csv(const std::string& text);
void write_trace(const std::vector<TraceRow>& rows, const std::filesystem::path& path);
std::vector<TraceRow> read_trace(const std::filesystem::path& path);

// Least-squares slope of log(gap_rounded) against log(iter) over rows with
// positive iter and gap. NaN when fewer than two such rows exist.
double fitted_loglog_slope(const std::vector<TraceRow>& rows);

// Log-log line plot of gap_rounded (and gap_raw) against iteration.
std::string trace_to_svg(const std::vector<TraceRow>& rows, const std::string& title);

}  // namespace otwb
