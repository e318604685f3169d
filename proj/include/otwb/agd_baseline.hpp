#pragma once

#include "otwb/instances.hpp"
#include "otwb/kernels.hpp"
#include "otwb/ot_solver.hpp"
#include "otwb/trace.hpp"

#include <optional>
#include <vector>

namespace otwb {

struct PhiEval {
  double value = 0.0;
  Vector grad_u;
  Vector grad_v;
  ScaledPlan plan;
  NewtonResult root;
};

/// φ(u, v) = ⟨u, μ^δ⟩ + ⟨v, ν^δ⟩ + min over the floored simplex of
/// ⟨C - u ⊗ 1 - 1 ⊗ v, X⟩ + γ⟨X, ln X⟩, with its gradient.
PhiEval phi_and_grad(const Vector& u, const Vector& v, const OtInstance& inst, double gamma,
                     double delta);

/// Recomputes φ from a plan and the dual point.
double phi_from_plan(const Vector& u, const Vector& v, const Matrix& plan, const OtInstance& inst,
                     double gamma, double delta);

struct AgdOptions {
  std::optional<double> gamma;  // defaults to eps / (4 ln n)
  double delta = 0.01;
  long max_iter = 20000;
  long gap_every = 0;  // 0 selects ⌈√n⌉
};

struct BacktrackEvent {
  long iter = 0;
  double L_before = 0.0;
  double L_after = 0.0;
  bool violation = false;  // true when L grew because the ascent test failed
};

struct AgdReport {
  Matrix plan_rounded;
  OtDual dual;
  double value = 0.0;
  double gap_certificate = 0.0;
  bool converged = false;
  long iterations = 0;
  long oracle_calls = 0;
  double gamma = 0.0;
  std::vector<double> phi_history;  // φ at the monotone sequence
  std::vector<BacktrackEvent> backtracking;
  std::vector<TraceRow> trace;
};

/// Monotone accelerated gradient ascent on φ with a backtracked smoothness
/// estimate.
AgdReport solve_agd(const OtInstance& inst, double eps, const AgdOptions& options = {});

}  // namespace otwb
