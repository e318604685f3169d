#pragma once

#include "otwb/instances.hpp"
#include "otwb/ot_solver.hpp"

#include <vector>

namespace otwb {

struct ExactSolution {
  Matrix plan;
  OtDual dual;   // optimal potentials for the cost that was solved
  double value;  // ⟨cost, plan⟩
  long pivots = 0;
};

inline constexpr Index kTransportOracleCap = 128;

/// Transportation simplex: northwest-corner start, Bland's entering and
/// leaving rules, potentials on the basis tree.
ExactSolution solve_exact_transport(const Matrix& cost, const Vector& mu, const Vector& nu,
                                    Index cap = kTransportOracleCap);
/// Solves on the normalized cost; `value` is reported in the raw cost.
ExactSolution solve_exact_ot(const OtInstance& inst, Index cap = kTransportOracleCap);

/// Shifts an optimal dual pair of a normalized cost into [-‖C‖/2, ‖C‖/2].
OtDual shift_dual_to_box(const Vector& u, const Vector& v, const Matrix& cost);

/// μ = e_1, ν = e_n, C = μ ⊗ ν: optimal value 1 and every optimal dual has
/// sup-norm at least 1/2.
OtInstance adversarial_instance(Index n);

// ---------------------------------------------------------------------------
// Dense two-phase simplex for min c^T x s.t. A x = b, x >= 0.

struct LpResult {
  enum class Status { optimal, infeasible, unbounded } status = Status::optimal;
  Vector x;
  Vector y;  // equality duals: c - A^T y >= 0 at optimality
  double value = 0.0;
  long pivots = 0;
};

LpResult solve_lp(const Matrix& a, const Vector& b, const Vector& c);

struct ExactWbSolution {
  std::vector<Matrix> plans;
  Vector barycenter;
  std::vector<Vector> u;
  std::vector<Vector> v;  // Σ_l w_l v_l = 0
  double value = 0.0;     // Σ_l w_l ⟨C_l, X_l⟩ on the normalized costs
};

inline constexpr Index kWbOracleMaxN = 8;
inline constexpr Index kWbOracleMaxM = 3;

ExactWbSolution solve_exact_wb(const WbInstance& inst);

}  // namespace otwb
