#include "otwb/kernels.hpp"

#include "otwb/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace otwb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": shape mismatch");
  }
}

void require_finite_grad(const Matrix& grad, double sigma) {
  if (!grad.allFinite()) throw NumericalFailure("prox gradient has non-finite entries");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    std::ostringstream os;
    os << "prox step sigma=" << sigma << " is not a finite nonnegative number";
    throw NumericalFailure(os.str());
  }
}

TransportPlan normalize_total(Matrix log_x) {
  const double mx = log_x.maxCoeff();
  if (!std::isfinite(mx)) throw NumericalFailure("entropy prox produced a plan with no mass");
  Matrix lin = (log_x.array() - mx).exp().matrix();
  const double total = lin.sum();
  lin /= total;
  log_x.array() -= mx + std::log(total);
  return TransportPlan::from_parts(std::move(log_x), std::move(lin));
}

}  // namespace

TransportPlan TransportPlan::from_log(Matrix log_weights) {
  TransportPlan p;
  p.lin_ = log_weights.array().exp().matrix();
  p.log_ = std::move(log_weights);
  return p;
}

TransportPlan TransportPlan::from_parts(Matrix log_weights, Matrix weights) {
  TransportPlan p;
  p.lin_ = std::move(weights);
  p.log_ = std::move(log_weights);
  return p;
}

TransportPlan TransportPlan::from_linear(const Matrix& weights) {
  if ((weights.array() < 0.0).any() || !weights.allFinite()) {
    throw Error("plan entries must be finite and nonnegative");
  }
  TransportPlan p;
  p.lin_ = weights;
  p.log_ = weights.unaryExpr([](double w) { return w > 0.0 ? std::log(w) : kNegInf; });
  return p;
}

TransportPlan TransportPlan::uniform(Index n) {
  const double v = 1.0 / static_cast<double>(n * n);
  TransportPlan p;
  p.lin_ = Matrix::Constant(n, n, v);
  p.log_ = Matrix::Constant(n, n, std::log(v));
  return p;
}

TransportPlan TransportPlan::row_product(const Vector& mu) {
  const Index n = mu.size();
  Matrix x = mu.replicate(1, n) / static_cast<double>(n);
  return from_linear(x);
}

ScaledPlan ScaledPlan::scale(const Matrix& plan, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
  ScaledPlan s;
  s.delta = delta;
  const auto n = static_cast<double>(plan.rows());
  s.entries = ((1.0 - delta) * plan.array() + delta / (n * n)).matrix();
  return s;
}

Matrix ScaledPlan::unscale() const {
  return ((entries.array() - floor()) / (1.0 - delta)).cwiseMax(0.0).matrix();
}

namespace {

// e^d (d - 1) + 1, the per-entry Bregman term of x ln x divided by y when
// d = ln x - ln y. The series avoids cancellation for nearly equal entries.
double bregman_entry(double d) {
  if (std::abs(d) < 0.1) {
    double term = d * d, sum = 0.0, fact = 2.0;
    for (int k = 2; k <= 12; ++k) {
      sum += term * static_cast<double>(k - 1) / fact;
      term *= d;
      fact *= static_cast<double>(k + 1);
    }
    return sum;
  }
  return d * std::exp(d) - std::expm1(d);
}

double kl_entry(double x, double lx, double y, double ly) {
  if (x <= 0.0) return y;
  if (y <= 0.0) return std::numeric_limits<double>::infinity();
  return y * bregman_entry(lx - ly);
}

}  // namespace

double kl_divergence(const Matrix& x, const Matrix& y) {
  require_same_shape(x, y, "kl_divergence");
  double total = 0.0;
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double a = x(i, j), b = y(i, j);
      total += kl_entry(a, a > 0.0 ? std::log(a) : 0.0, b, b > 0.0 ? std::log(b) : 0.0);
    }
  }
  return total;
}

double kl_divergence(const TransportPlan& x, const TransportPlan& y) {
  require_same_shape(x.weights(), y.weights(), "kl_divergence");
  const Matrix& lx = x.log_weights();
  const Matrix& ly = y.log_weights();
  const Matrix& wx = x.weights();
  const Matrix& wy = y.weights();
  double total = 0.0;
  for (Index j = 0; j < lx.cols(); ++j) {
    for (Index i = 0; i < lx.rows(); ++i) {
      const double a = wx(i, j), b = wy(i, j);
      if (lx(i, j) == kNegInf) {
        total += b;
      } else if (ly(i, j) == kNegInf) {
        return std::numeric_limits<double>::infinity();
      } else {
        const double d = lx(i, j) - ly(i, j);
        total += std::abs(d) < 0.1 ? b * bregman_entry(d) : a * d - (a - b);
      }
    }
  }
  return total;
}

double neg_entropy(const TransportPlan& x) {
  double total = 0.0;
  const Matrix& w = x.weights();
  const Matrix& l = x.log_weights();
  for (Index j = 0; j < w.cols(); ++j) {
    for (Index i = 0; i < w.rows(); ++i) {
      if (w(i, j) > 0.0) total += w(i, j) * l(i, j);
    }
  }
  return total;
}

TransportPlan entropy_prox_simplex(const TransportPlan& xbar, const Matrix& grad, double sigma) {
  return entropy_prox_regularized(xbar, grad, sigma, 0.0);
}

TransportPlan entropy_prox_regularized(const TransportPlan& xbar, const Matrix& grad, double sigma,
                                       double gamma) {
  require_same_shape(xbar.log_weights(), grad, "entropy prox");
  require_finite_grad(grad, sigma);
  if (sigma == 0.0) return xbar;
  Matrix e = xbar.log_weights() - sigma * grad;
  if (gamma > 0.0) e /= (1.0 + sigma * gamma);
  return normalize_total(std::move(e));
}

TransportPlan entropy_prox_fixed_marginal(const TransportPlan& xbar, const Matrix& grad,
                                          double sigma, double gamma, const Vector& mu) {
  require_same_shape(xbar.log_weights(), grad, "entropy prox");
  require_finite_grad(grad, sigma);
  if (mu.size() != grad.rows()) throw Error("entropy prox: marginal length mismatch");
  Matrix e = xbar.log_weights() - sigma * grad;
  if (gamma > 0.0) e /= (1.0 + sigma * gamma);
  Vector row_max = e.rowwise().maxCoeff();
  for (Index i = 0; i < e.rows(); ++i) {
    if (mu[i] <= 0.0) {
      row_max[i] = 0.0;
    } else if (row_max[i] == kNegInf) {
      throw NumericalFailure("entropy prox: row with positive mass has no support");
    }
  }
  Matrix lin = (e.colwise() - row_max).array().exp().matrix();
  const Vector row_sum = lin.rowwise().sum();
  Vector scale(e.rows()), shift(e.rows());
  for (Index i = 0; i < e.rows(); ++i) {
    scale[i] = mu[i] > 0.0 ? mu[i] / row_sum[i] : 0.0;
    shift[i] = mu[i] > 0.0 ? std::log(mu[i]) - row_max[i] - std::log(row_sum[i]) : kNegInf;
  }
  lin = scale.asDiagonal() * lin;
  e.colwise() += shift;
  for (Index i = 0; i < e.rows(); ++i) {
    if (mu[i] <= 0.0) e.row(i).setConstant(kNegInf);
  }
  return TransportPlan::from_parts(std::move(e), std::move(lin));
}

// ---------------------------------------------------------------------------

NewtonResult scaled_root_newton(const Matrix& z, double floor) {
  const double total = z.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalFailure("scaled prox: Gibbs weights have no finite positive mass");
  }
  const Index count = z.size();
  const int cap = static_cast<int>(std::min<Index>(count + 2, std::numeric_limits<int>::max()));
  const double* zp = z.data();

  NewtonResult res;
  double s = 0.0;
  Index clamped_prev = -1;
  for (int it = 1; it <= cap; ++it) {
    // Entries with Z <= s*floor are clamped (ties included); F is affine on
    // the current piece, so one Newton step lands on its zero.
    double active_sum = 0.0;
    Index clamped = 0;
    const double thr = s * floor;
    for (Index k = 0; k < count; ++k) {
      if (zp[k] > thr) {
        active_sum += zp[k];
      } else {
        ++clamped;
      }
    }
    res.iterations = it;
    const double next = active_sum / (1.0 - floor * static_cast<double>(clamped));
    const bool stable = clamped == clamped_prev;
    s = next;
    clamped_prev = clamped;
    if (stable) break;
    // F(s) at the new point.
    double f = s;
    const double thr2 = s * floor;
    for (Index k = 0; k < count; ++k) f -= std::max(zp[k], thr2);
    if (std::abs(f) <= 1e-12 * s) {
      res.s = s;
      res.residual = std::abs(f) / s;
      return res;
    }
  }
  double f = s;
  for (Index k = 0; k < count; ++k) f -= std::max(zp[k], s * floor);
  res.s = s;
  res.residual = std::abs(f) / s;
  return res;
}

PicardResult scaled_root_picard(const Matrix& z, double floor, double tol, int max_iter) {
  const double total = z.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalFailure("scaled prox: Gibbs weights have no finite positive mass");
  }
  PicardResult res;
  double s = 0.0;
  res.history.push_back(s);
  for (int k = 0; k < max_iter; ++k) {
    const double t = z.array().max(s * floor).sum();
    if (std::abs(t - s) <= tol * t) break;
    s = t;
    res.history.push_back(s);
  }
  res.s = s;
  res.iterations = static_cast<int>(res.history.size()) - 1;
  return res;
}

Matrix scaled_plan_from_root(const Matrix& z, double s, double floor) {
  return (z.array() / s).max(floor).matrix();
}

Matrix scaled_gibbs(const ScaledPlan& xbar, const Matrix& grad, double sigma, double gamma) {
  require_same_shape(xbar.entries, grad, "scaled prox");
  require_finite_grad(grad, sigma);
  Matrix e = xbar.entries.array().log().matrix() - sigma * grad;
  if (gamma > 0.0) e /= (1.0 + sigma * gamma);
  const double mx = e.maxCoeff();
  if (!std::isfinite(mx)) {
    std::ostringstream os;
    os << "scaled prox: exponent overflow at sigma=" << sigma;
    throw NumericalFailure(os.str());
  }
  return (e.array() - mx).exp().matrix();
}

std::pair<ScaledPlan, NewtonResult> scaled_prox(const ScaledPlan& xbar, const Matrix& grad,
                                                double sigma, double gamma) {
  const Matrix z = scaled_gibbs(xbar, grad, sigma, gamma);
  const double floor = xbar.floor();
  NewtonResult root = scaled_root_newton(z, floor);
  ScaledPlan out;
  out.delta = xbar.delta;
  out.entries = scaled_plan_from_root(z, root.s, floor);
  return {std::move(out), root};
}

std::pair<ScaledPlan, int> scaled_prox_picard(const ScaledPlan& xbar, const Matrix& grad,
                                              double sigma, double tol) {
  const Matrix z = scaled_gibbs(xbar, grad, sigma);
  const double floor = xbar.floor();
  const PicardResult root = scaled_root_picard(z, floor, tol);
  ScaledPlan out;
  out.delta = xbar.delta;
  out.entries = scaled_plan_from_root(z, root.s, floor);
  return {std::move(out), root.iterations};
}

}  // namespace otwb
