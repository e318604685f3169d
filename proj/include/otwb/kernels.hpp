#pragma once

#include "otwb/instances.hpp"

#include <utility>
#include <vector>

namespace otwb {

/// Nonnegative n x n plan kept both as ln X and as X. The log form is the
/// state the entropy proxes update; the linear form is derived from it.
class TransportPlan {
 public:
  TransportPlan() = default;

  static TransportPlan from_log(Matrix log_weights);
  static TransportPlan from_linear(const Matrix& weights);
  // Both forms already consistent; no recomputation.
  static TransportPlan from_parts(Matrix log_weights, Matrix weights);
  // 1/n^2 everywhere.
  static TransportPlan uniform(Index n);
  // X_ij = mu_i / n.
  static TransportPlan row_product(const Vector& mu);

  const Matrix& log_weights() const { return log_; }
  const Matrix& weights() const { return lin_; }
  Index size() const { return lin_.rows(); }

  Vector row_sums() const { return lin_.rowwise().sum(); }
  Vector col_sums() const { return lin_.colwise().sum().transpose(); }
  double mass() const { return lin_.sum(); }

 private:
  Matrix log_;
  Matrix lin_;
};

/// Plan on the floored simplex: entries >= delta/n^2, total mass 1.
struct ScaledPlan {
  Matrix entries;
  double delta = 0.0;

  Index size() const { return entries.rows(); }
  double floor() const {
    const auto n = static_cast<double>(entries.rows());
    return delta / (n * n);
  }
  // X^delta = (1 - delta) X + delta/n^2.
  static ScaledPlan scale(const Matrix& plan, double delta);
  // (X^delta - delta/n^2) / (1 - delta), clipped at 0 against rounding noise.
  Matrix unscale() const;
};

struct NewtonResult {
  double s = 0.0;
  int iterations = 0;
  double residual = 0.0;  // |F(s)| / s
};

struct PicardResult {
  double s = 0.0;
  int iterations = 0;
  std::vector<double> history;  // s^0, s^1, ..., s^iterations
};

/// Σ X ln(X/Y) - X + Y with 0 ln 0 = 0; equals ⟨X, ln X - ln Y⟩ when the
/// masses agree.
double kl_divergence(const TransportPlan& x, const TransportPlan& y);
double kl_divergence(const Matrix& x, const Matrix& y);
/// Σ X ln X, in [-2 ln n, 0] on the simplex.
double neg_entropy(const TransportPlan& x);

/// N(xbar ⊙ exp(-sigma grad)), normalized to total mass 1.
TransportPlan entropy_prox_simplex(const TransportPlan& xbar, const Matrix& grad, double sigma);
/// ln X+ = (ln xbar - sigma grad) / (1 + sigma gamma), normalized to mass 1.
TransportPlan entropy_prox_regularized(const TransportPlan& xbar, const Matrix& grad, double sigma,
                                       double gamma);
/// Same exponent, normalized row-wise to row sums mu.
TransportPlan entropy_prox_fixed_marginal(const TransportPlan& xbar, const Matrix& grad,
                                          double sigma, double gamma, const Vector& mu);

/// Root of F(s) = s - Σ max(Z_ij, s * floor) by Newton from s = 0.
/// Requires Z >= 0 with positive total and floor * Z.size() < 1.
NewtonResult scaled_root_newton(const Matrix& z, double floor);
/// Fixed-point iteration s <- Σ max(Z_ij, s * floor) from s = 0.
PicardResult scaled_root_picard(const Matrix& z, double floor, double tol, int max_iter = 10000);
/// max(Z / s, floor) entrywise.
Matrix scaled_plan_from_root(const Matrix& z, double s, double floor);

/// Gibbs weights Z = xbar ⊙ exp(-sigma grad) (tempered by 1/(1+sigma gamma)),
/// rescaled so the largest entry is 1.
Matrix scaled_gibbs(const ScaledPlan& xbar, const Matrix& grad, double sigma, double gamma = 0.0);

/// argmin over the floored simplex of ⟨grad, X⟩ + KL(X, xbar)/sigma
/// (plus gamma times the scaled entropy when gamma > 0).
std::pair<ScaledPlan, NewtonResult> scaled_prox(const ScaledPlan& xbar, const Matrix& grad,
                                                double sigma, double gamma = 0.0);
std::pair<ScaledPlan, int> scaled_prox_picard(const ScaledPlan& xbar, const Matrix& grad,
                                              double sigma, double tol);

}  // namespace otwb
