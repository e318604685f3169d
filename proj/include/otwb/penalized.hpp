#pragma once

#include "otwb/hpd.hpp"
#include "otwb/instances.hpp"
#include "otwb/kernels.hpp"
#include "otwb/wb_solver.hpp"

#include <string>
#include <vector>

namespace otwb {

/// Marginal penalty ψ. Quadratic: ψ(r) = (η/2)‖r‖², so η → ∞ recovers the
/// hard constraint. Total variation: ψ(r) = α‖r‖₁.
struct Penalty {
  enum class Kind { quadratic, tv } kind = Kind::quadratic;
  double param = 1.0;

  static Penalty quadratic(double eta);
  static Penalty tv(double alpha);
  // "quad:<eta>" or "tv:<alpha>".
  static Penalty parse(const std::string& text);
  std::string to_string() const;

  double value(const Vector& residual) const;
  // ψ*(v); +inf outside [-α, α] for tv.
  double conjugate(const Vector& v) const;
};

/// prox of τψ* at v̄ + τ·residual.
Vector penalty_prox(const Vector& vbar, const Vector& residual, double tau, const Penalty& penalty);

struct PenalizedOptions {
  bool linesearch = true;
  double rho = 0.99;
  double beta_mult = 1.0;
  double gamma_reg = 0.0;
  long max_outer = 20000;
  int max_inner = 5000;
  long gap_every = 0;
  bool keep_steps = false;
  bool normalize_barycenter = false;  // report ν/‖ν‖₁ (WB only)
};

struct UnbalancedOtReport {
  Matrix plan;  // rows equal μ
  Vector v;
  double transport_cost = 0.0;  // ⟨C_raw, X⟩
  double penalty_term = 0.0;    // ψ(ν - Xᵀ1)
  double value = 0.0;           // transport_cost + penalty_term
  double gap = 0.0;
  double gap_raw = 0.0;
  bool converged = false;
  long iterations = 0;
  long inner_total = 0;
  EngineConfig config;
  std::vector<TraceRow> trace;
  std::vector<StepRecord> steps;
};

UnbalancedOtReport solve_unbalanced_ot(const UnbalancedOtInstance& inst, const Penalty& penalty,
                                       double eps, const PenalizedOptions& options = {});

struct UnbalancedWbReport {
  Vector barycenter;
  std::vector<Matrix> plans;  // rows equal μ_l
  std::vector<Vector> v;
  double value = 0.0;  // Σ w_l (⟨C_l,raw, X_l⟩ + ψ(ν - X_lᵀ1))
  double gap = 0.0;
  bool converged = false;
  long iterations = 0;
  long inner_total = 0;
  EngineConfig config;
  std::vector<TraceRow> trace;
  std::vector<StepRecord> steps;
};

UnbalancedWbReport solve_unbalanced_wb(const WbInstance& inst, const Penalty& penalty, double eps,
                                       const PenalizedOptions& options = {});

// ---------------------------------------------------------------------------

class UnbalancedOtAdapter {
 public:
  using Dual = TransportPlan;

  UnbalancedOtAdapter(const UnbalancedOtInstance& inst, Penalty penalty, double gamma_reg);

  TransportPlan initial_plan() const;
  Vector initial_x() const { return Vector::Zero(inst_.n); }

  TransportPlan dual_prox(const TransportPlan& y, const Vector& xbar, double sigma) const;
  Vector primal_prox(const Vector& x, const TransportPlan& y_new, double tau) const;
  double primal_sqnorm(const Vector& dx) const { return dx.squaredNorm(); }
  double dual_divergence(const TransportPlan& y1, const TransportPlan& y0) const;
  double coupling(const Vector& dx, const TransportPlan& y1, const TransportPlan& y0) const;
  Vector flatten(const TransportPlan& y) const;
  GapReport gap(const Vector& x, const Vector& y_flat) const;

  double primal_objective(const Matrix& plan) const;  // normalized cost
  double dual_objective(const Vector& v) const;

 private:
  const UnbalancedOtInstance& inst_;
  Penalty penalty_;
  double gamma_reg_;
};

struct UnbalancedWbState {
  WbPlans plans;
  Vector nu;
};

class UnbalancedWbAdapter {
 public:
  using Dual = UnbalancedWbState;

  UnbalancedWbAdapter(const WbInstance& inst, Penalty penalty, double gamma_reg);

  UnbalancedWbState initial_state() const;
  Vector initial_x() const { return Vector::Zero(inst_.m * inst_.n); }

  UnbalancedWbState dual_prox(const UnbalancedWbState& y, const Vector& xbar, double sigma) const;
  Vector primal_prox(const Vector& x, const UnbalancedWbState& y_new, double tau) const;
  double primal_sqnorm(const Vector& dx) const;
  double dual_divergence(const UnbalancedWbState& y1, const UnbalancedWbState& y0) const;
  double coupling(const Vector& dx, const UnbalancedWbState& y1,
                  const UnbalancedWbState& y0) const;
  Vector flatten(const UnbalancedWbState& y) const;
  GapReport gap(const Vector& x, const Vector& y_flat) const;

  std::vector<Matrix> plans_of(const Vector& y_flat) const;
  Vector nu_of(const Vector& y_flat) const;
  // Best barycenter for fixed plans: weighted mean (quadratic) or weighted
  // median (tv) of the plan column sums.
  Vector best_nu(const std::vector<Matrix>& plans) const;
  double primal_objective(const std::vector<Matrix>& plans, const Vector& nu) const;
  // Dual objective after shifting v so that Σ w_l v_l >= 0.
  double dual_objective(const std::vector<Vector>& v) const;
  std::vector<Vector> blocks(const Vector& x) const;

 private:
  const WbInstance& inst_;
  Penalty penalty_;
  double gamma_reg_;
};

}  // namespace otwb
