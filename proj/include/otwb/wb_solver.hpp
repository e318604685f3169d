#pragma once

#include "otwb/hpd.hpp"
#include "otwb/instances.hpp"
#include "otwb/kernels.hpp"

#include <optional>
#include <vector>

namespace otwb {

/// Duals of the barycenter saddle problem; v[m-1] is the closure
/// -(1/w_m) Σ_{l<m} w_l v_l.
struct WbDual {
  std::vector<Vector> u;
  std::vector<Vector> v;
};

using WbPlans = std::vector<TransportPlan>;

/// -(1/w_m) Σ_{l<m} w_l v_l.
Vector wb_closure(const std::vector<Vector>& v_head, const Vector& weights);

/// Best-response gap of the penalized barycenter saddle problem.
double wb_gap(const std::vector<Matrix>& plans, const WbDual& dual, const WbInstance& inst);

/// Rounds X_m to row sums μ_m, reads the barycenter off its columns, then
/// rounds every other plan to (μ_l, barycenter).
std::vector<Matrix> wb_round(const std::vector<Matrix>& plans, const WbInstance& inst);

/// Σ_l w_l Σ_i μ_{l,i} min_j (C_{l,ij} - v_{l,j}); a lower bound on the
/// barycenter LP value for any v with Σ w_l v_l = 0.
double wb_dual_bound(const std::vector<Vector>& v, const WbInstance& inst);

struct WbOptions {
  bool fixed_marginal = false;
  bool linesearch = true;
  double rho = 0.99;
  double beta_mult = 100.0;
  double gamma_reg = 0.0;
  long max_outer = 10000;
  int max_inner = 5000;
  long gap_every = 0;  // 0 selects ⌈√n⌉
  CandidatePolicy candidates = CandidatePolicy::both;
  bool keep_steps = false;
};

struct WbSolution {
  Vector barycenter;
  std::vector<Matrix> plans_rounded;
  WbDual dual;
  double value = 0.0;  // Σ w_l ⟨C_l,raw, Y_l⟩
  double gap_certificate = 0.0;
  double gap_raw = 0.0;
  bool converged = false;
  long iterations = 0;
  long inner_total = 0;
  long plan_passes = 0;
  long invariant_violations = 0;
  EngineConfig config;
  std::vector<TraceRow> trace;
  std::vector<StepRecord> steps;
};

WbSolution solve_wb(const WbInstance& inst, double eps, const WbOptions& options = {});

/// Coupling norm bound for the weighted primal norm: √(1 + 1/w_m), or
/// 1/√w_m when the row marginals are fixed.
double wb_coupling_norm(const WbInstance& inst, bool fixed_marginal);

class WbAdapter {
 public:
  using Dual = WbPlans;

  WbAdapter(const WbInstance& inst, bool fixed_marginal, double gamma_reg);

  WbPlans initial_plans() const;
  Vector initial_x() const { return Vector::Zero(x_size()); }
  Index x_size() const;

  WbPlans dual_prox(const WbPlans& y, const Vector& xbar, double sigma) const;
  Vector primal_prox(const Vector& x, const WbPlans& y_new, double tau) const;
  double primal_sqnorm(const Vector& dx) const;
  double dual_divergence(const WbPlans& y1, const WbPlans& y0) const;
  double coupling(const Vector& dx, const WbPlans& y1, const WbPlans& y0) const;
  Vector flatten(const WbPlans& y) const;
  GapReport gap(const Vector& x, const Vector& y_flat) const;

  WbDual split(const Vector& x) const;
  std::vector<Matrix> unflatten(const Vector& y_flat) const;
  long plan_passes() const { return plan_passes_; }

 private:
  Vector u_block(const Vector& x, Index l) const;
  Vector v_block(const Vector& x, Index l) const;  // l < m-1

  const WbInstance& inst_;
  bool fixed_marginal_;
  double gamma_reg_;
  mutable long plan_passes_ = 0;
};

}  // namespace otwb
