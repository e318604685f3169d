#pragma once

#include "otwb/hpd.hpp"
#include "otwb/instances.hpp"
#include "otwb/kernels.hpp"

#include <optional>
#include <vector>

namespace otwb {

struct OtDual {
  Vector u;
  Vector v;
};

/// u ⊗ 1 + 1 ⊗ v, i.e. entry (i, j) is u_i + v_j.
Matrix apply_K(const Vector& u, const Vector& v);

enum class ResidualCoupling {
  rank_one,  // r c^T / ‖r‖₁
  sparse,    // northwest-corner coupling of the residuals, at most 2n - 1 entries
};

/// Row scaling, column scaling, then a coupling of the leftover marginals.
/// The result has row sums mu and column sums nu; ‖X - Y‖₁ is at most the
/// total marginal violation of X.
Matrix round_to_feasible(const Matrix& x, const Vector& mu, const Vector& nu,
                         ResidualCoupling residual = ResidualCoupling::rank_one);

/// Northwest-corner coupling of two nonnegative vectors with equal mass.
Matrix northwest_corner(const Vector& a, const Vector& b);

/// Saddle gap of the box-constrained formulation with best responses.
/// Throws when the dual lies outside [-λ, λ].
double duality_gap(const Matrix& x, const OtDual& dual, const OtInstance& inst);
/// Same for the row-fixed formulation (plan rows equal μ, only v is a variable).
double duality_gap_fixed_marginal(const Matrix& x, const Vector& v, const OtInstance& inst);

/// Best dual objective reachable from (u, v) by c-transforms; always a valid
/// lower bound on the optimal transport cost of `cost`.
struct DualBound {
  double value = 0.0;
  OtDual dual;
};
DualBound improved_dual_bound(const Matrix& cost, const Vector& mu, const Vector& nu,
                              const Vector& u, const Vector& v);

double support_fraction(const Matrix& plan, double threshold = 1e-12);

enum class OtMode { simplex, fixed_marginal, scaled };
enum class OtVariant { plain, regularized };

struct OtOptions {
  OtVariant variant = OtVariant::regularized;
  OtMode mode = OtMode::fixed_marginal;
  bool linesearch = true;
  double rho = 0.99;
  double beta1_mult = 100.0;
  std::optional<double> gamma_reg;  // overrides eps/(4 ln n)
  double delta = 0.01;              // scaled mode only
  long max_outer = 200000;
  int max_inner = 5000;
  long gap_every = 0;  // 0 selects ⌈√n⌉
  std::optional<CandidatePolicy> candidates;
  bool keep_steps = false;
};

struct OtSolution {
  Matrix plan_rounded;
  OtDual dual;
  double value = 0.0;  // ⟨C_raw, plan_rounded⟩
  double lower_bound = 0.0;
  double gap_certificate = 0.0;
  double gap_raw = 0.0;
  bool converged = false;
  long iterations = 0;
  long inner_total = 0;
  double T = 0.0;
  long invariant_violations = 0;
  double support = 1.0;
  double gamma_reg = 0.0;
  EngineConfig config;
  std::vector<TraceRow> trace;
  std::vector<StepRecord> steps;
};

OtSolution solve_eps(const OtInstance& inst, double eps, const OtOptions& options = {});

// ---------------------------------------------------------------------------
// Adapters for the engine. x holds (u, v) in simplex mode and v alone in
// fixed-marginal mode; y is the plan.

class OtAdapter {
 public:
  using Dual = TransportPlan;

  OtAdapter(const OtInstance& inst, bool fixed_marginal, double gamma_reg);

  TransportPlan initial_plan() const;
  Vector initial_x() const;

  TransportPlan dual_prox(const TransportPlan& y, const Vector& xbar, double sigma) const;
  Vector primal_prox(const Vector& x, const TransportPlan& y_new, double tau) const;
  double primal_sqnorm(const Vector& dx) const { return dx.squaredNorm(); }
  double dual_divergence(const TransportPlan& y1, const TransportPlan& y0) const;
  double coupling(const Vector& dx, const TransportPlan& y1, const TransportPlan& y0) const;
  Vector flatten(const TransportPlan& y) const;
  GapReport gap(const Vector& x, const Vector& y_flat) const;

  // g(x) + ⟨Kx, y⟩ - h*(y) without the regularizer: the LP Lagrangian.
  double lagrangian(const Vector& x, const Matrix& y) const;
  Matrix unflatten(const Vector& y_flat) const;
  OtDual split(const Vector& x) const;
  double coupling_norm() const { return fixed_marginal_ ? 1.0 : std::sqrt(2.0); }
  bool fixed_marginal() const { return fixed_marginal_; }

 private:
  const OtInstance& inst_;
  bool fixed_marginal_;
  double gamma_reg_;
};

class ScaledOtAdapter {
 public:
  using Dual = ScaledPlan;

  ScaledOtAdapter(const OtInstance& inst, double delta, double gamma_reg);

  ScaledPlan initial_plan() const;
  Vector initial_x() const { return Vector::Zero(2 * inst_.n); }

  ScaledPlan dual_prox(const ScaledPlan& y, const Vector& xbar, double sigma) const;
  Vector primal_prox(const Vector& x, const ScaledPlan& y_new, double tau) const;
  double primal_sqnorm(const Vector& dx) const { return dx.squaredNorm(); }
  double dual_divergence(const ScaledPlan& y1, const ScaledPlan& y0) const;
  double coupling(const Vector& dx, const ScaledPlan& y1, const ScaledPlan& y0) const;
  Vector flatten(const ScaledPlan& y) const;
  GapReport gap(const Vector& x, const Vector& y_flat) const;

  // Rounded unscaled plan for a flattened scaled plan.
  Matrix round_plan(const Vector& y_flat) const;
  const Vector& mu_delta() const { return mu_delta_; }
  const Vector& nu_delta() const { return nu_delta_; }
  long newton_iterations() const { return newton_iterations_; }

 private:
  const OtInstance& inst_;
  double delta_;
  double gamma_reg_;
  Vector mu_delta_;
  Vector nu_delta_;
  mutable long newton_iterations_ = 0;
};

}  // namespace otwb
