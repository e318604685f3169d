#include "otwb/ot_solver.hpp"

#include "otwb/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace otwb {

Matrix apply_K(const Vector& u, const Vector& v) {
  return u.replicate(1, v.size()) + v.transpose().replicate(u.size(), 1);
}

Matrix northwest_corner(const Vector& a, const Vector& b) {
  const Index n = a.size(), m = b.size();
  Matrix y = Matrix::Zero(n, m);
  Vector ra = a.cwiseMax(0.0), rb = b.cwiseMax(0.0);
  Index i = 0, j = 0;
  while (i < n && j < m) {
    const double t = std::min(ra[i], rb[j]);
    y(i, j) += t;
    ra[i] -= t;
    rb[j] -= t;
    if (ra[i] <= rb[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return y;
}

Matrix round_to_feasible(const Matrix& x, const Vector& mu, const Vector& nu,
                         ResidualCoupling residual) {
  if (x.rows() != mu.size() || x.cols() != nu.size()) throw Error("round: shape mismatch");
  Matrix y = x;
  const Vector r = y.rowwise().sum();
  for (Index i = 0; i < y.rows(); ++i) {
    if (r[i] > mu[i]) y.row(i) *= mu[i] / r[i];
  }
  const Vector c = y.colwise().sum().transpose();
  for (Index j = 0; j < y.cols(); ++j) {
    if (c[j] > nu[j]) y.col(j) *= nu[j] / c[j];
  }
  const Vector err_r = (mu - y.rowwise().sum()).cwiseMax(0.0);
  const Vector err_c = (nu - y.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = err_r.sum();
  if (mass <= 0.0) return y;
  if (residual == ResidualCoupling::sparse) {
    y += northwest_corner(err_r, err_c);
  } else {
    y.noalias() += err_r * err_c.transpose() / mass;
  }
  return y;
}

namespace {

void require_in_box(const Vector& w, double lambda, const char* name) {
  const double lim = lambda * (1.0 + 1e-12) + 1e-300;
  if (w.size() > 0 && w.cwiseAbs().maxCoeff() > lim) {
    std::ostringstream os;
    os << "dual variable " << name << " leaves the box [-" << lambda << ", " << lambda << "]";
    throw Error(os.str());
  }
}

double dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

// min_j (C_ij - v_j) for each row i.
Vector row_ctransform(const Matrix& c, const Vector& v) {
  return (c.rowwise() - v.transpose()).rowwise().minCoeff();
}

// min_i (C_ij - u_i) for each column j.
Vector col_ctransform(const Matrix& c, const Vector& u) {
  return (c.colwise() - u).colwise().minCoeff().transpose();
}

}  // namespace

double duality_gap(const Matrix& x, const OtDual& dual, const OtInstance& inst) {
  const double lambda = inst.lambda;
  require_in_box(dual.u, lambda, "u");
  require_in_box(dual.v, lambda, "v");
  const Matrix& c = inst.cost.entries();
  const Vector& mu = inst.mu.values();
  const Vector& nu = inst.nu.values();
  const double primal = dot(c, x) + lambda * (mu - x.rowwise().sum()).lpNorm<1>() +
                        lambda * (nu - x.colwise().sum().transpose()).lpNorm<1>();
  const double reduced_min = (c - apply_K(dual.u, dual.v)).minCoeff();
  const double dual_value = dual.u.dot(mu) + dual.v.dot(nu) + reduced_min;
  return primal - dual_value;
}

double duality_gap_fixed_marginal(const Matrix& x, const Vector& v, const OtInstance& inst) {
  require_in_box(v, inst.lambda, "v");
  const Matrix& c = inst.cost.entries();
  const Vector& mu = inst.mu.values();
  const Vector& nu = inst.nu.values();
  const double primal = dot(c, x) + inst.lambda * (nu - x.colwise().sum().transpose()).lpNorm<1>();
  const double dual_value = v.dot(nu) + row_ctransform(c, v).dot(mu);
  return primal - dual_value;
}

DualBound improved_dual_bound(const Matrix& cost, const Vector& mu, const Vector& nu,
                              const Vector& u, const Vector& v) {
  DualBound best;
  {
    const Vector v1 = col_ctransform(cost, u);
    const Vector u1 = row_ctransform(cost, v1);
    best.value = u1.dot(mu) + v1.dot(nu);
    best.dual = {u1, v1};
  }
  {
    const Vector u2 = row_ctransform(cost, v);
    const Vector v2 = col_ctransform(cost, u2);
    const double val = u2.dot(mu) + v2.dot(nu);
    if (val > best.value) {
      best.value = val;
      best.dual = {u2, v2};
    }
  }
  return best;
}

double support_fraction(const Matrix& plan, double threshold) {
  return static_cast<double>((plan.array() > threshold).count()) / static_cast<double>(plan.size());
}

// ---------------------------------------------------------------------------

OtAdapter::OtAdapter(const OtInstance& inst, bool fixed_marginal, double gamma_reg)
    : inst_(inst), fixed_marginal_(fixed_marginal), gamma_reg_(gamma_reg) {}

TransportPlan OtAdapter::initial_plan() const {
  return fixed_marginal_ ? TransportPlan::row_product(inst_.mu.values())
                         : TransportPlan::uniform(inst_.n);
}

Vector OtAdapter::initial_x() const { return Vector::Zero(fixed_marginal_ ? inst_.n : 2 * inst_.n); }

OtDual OtAdapter::split(const Vector& x) const {
  if (fixed_marginal_) return {row_ctransform(inst_.cost.entries(), x), x};
  return {x.head(inst_.n), x.tail(inst_.n)};
}

TransportPlan OtAdapter::dual_prox(const TransportPlan& y, const Vector& xbar, double sigma) const {
  const Matrix& c = inst_.cost.entries();
  if (fixed_marginal_) {
    const Matrix grad = c.rowwise() - xbar.transpose();
    return entropy_prox_fixed_marginal(y, grad, sigma, gamma_reg_, inst_.mu.values());
  }
  const Matrix grad = c - apply_K(xbar.head(inst_.n), xbar.tail(inst_.n));
  return entropy_prox_regularized(y, grad, sigma, gamma_reg_);
}

Vector OtAdapter::primal_prox(const Vector& x, const TransportPlan& y_new, double tau) const {
  const double lam = inst_.lambda;
  const Vector cols = y_new.col_sums();
  if (fixed_marginal_) {
    return (x + tau * (inst_.nu.values() - cols)).cwiseMax(-lam).cwiseMin(lam);
  }
  Vector out(2 * inst_.n);
  out.head(inst_.n) = (x.head(inst_.n) + tau * (inst_.mu.values() - y_new.row_sums()))
                          .cwiseMax(-lam)
                          .cwiseMin(lam);
  out.tail(inst_.n) =
      (x.tail(inst_.n) + tau * (inst_.nu.values() - cols)).cwiseMax(-lam).cwiseMin(lam);
  return out;
}

double OtAdapter::dual_divergence(const TransportPlan& y1, const TransportPlan& y0) const {
  return kl_divergence(y1, y0);
}

double OtAdapter::coupling(const Vector& dx, const TransportPlan& y1,
                           const TransportPlan& y0) const {
  const Matrix d = y1.weights() - y0.weights();
  const Vector cols = d.colwise().sum().transpose();
  if (fixed_marginal_) return dx.dot(cols);
  return dx.head(inst_.n).dot(d.rowwise().sum()) + dx.tail(inst_.n).dot(cols);
}

Vector OtAdapter::flatten(const TransportPlan& y) const {
  return Eigen::Map<const Vector>(y.weights().data(), y.weights().size());
}

Matrix OtAdapter::unflatten(const Vector& y_flat) const {
  return Eigen::Map<const Matrix>(y_flat.data(), inst_.n, inst_.n);
}

double OtAdapter::lagrangian(const Vector& x, const Matrix& y) const {
  const OtDual d = split(x);
  const Vector& mu = inst_.mu.values();
  const Vector& nu = inst_.nu.values();
  double val = -dot(inst_.cost.entries(), y) - d.v.dot(nu - y.colwise().sum().transpose());
  if (!fixed_marginal_) val -= d.u.dot(mu - y.rowwise().sum());
  return val;
}

GapReport OtAdapter::gap(const Vector& x, const Vector& y_flat) const {
  const Matrix plan = unflatten(y_flat);
  const Matrix& c = inst_.cost.entries();
  GapReport r;
  if (fixed_marginal_) {
    r.raw = duality_gap_fixed_marginal(plan, x, inst_);
  } else {
    r.raw = duality_gap(plan, split(x), inst_);
  }
  const Matrix rounded = round_to_feasible(plan, inst_.mu.values(), inst_.nu.values());
  const OtDual d = split(x);
  const DualBound lb = improved_dual_bound(c, inst_.mu.values(), inst_.nu.values(), d.u, d.v);
  r.rounded = std::max(0.0, dot(c, rounded) - lb.value);
  r.primal_value = dot(inst_.cost.raw(), rounded);
  return r;
}

// ---------------------------------------------------------------------------

ScaledOtAdapter::ScaledOtAdapter(const OtInstance& inst, double delta, double gamma_reg)
    : inst_(inst), delta_(delta), gamma_reg_(gamma_reg) {
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("delta must lie in (0, 1)");
  const double n = static_cast<double>(inst.n);
  mu_delta_ = ((1.0 - delta) * inst.mu.values().array() + delta / n).matrix();
  nu_delta_ = ((1.0 - delta) * inst.nu.values().array() + delta / n).matrix();
}

ScaledPlan ScaledOtAdapter::initial_plan() const {
  return ScaledPlan::scale(TransportPlan::uniform(inst_.n).weights(), delta_);
}

ScaledPlan ScaledOtAdapter::dual_prox(const ScaledPlan& y, const Vector& xbar, double sigma) const {
  const Matrix grad = inst_.cost.entries() - apply_K(xbar.head(inst_.n), xbar.tail(inst_.n));
  auto [plan, root] = scaled_prox(y, grad, sigma, gamma_reg_);
  newton_iterations_ += root.iterations;
  return plan;
}

Vector ScaledOtAdapter::primal_prox(const Vector& x, const ScaledPlan& y_new, double tau) const {
  const double lam = inst_.lambda;
  Vector out(2 * inst_.n);
  out.head(inst_.n) = (x.head(inst_.n) + tau * (mu_delta_ - y_new.entries.rowwise().sum()))
                          .cwiseMax(-lam)
                          .cwiseMin(lam);
  out.tail(inst_.n) =
      (x.tail(inst_.n) + tau * (nu_delta_ - y_new.entries.colwise().sum().transpose()))
          .cwiseMax(-lam)
          .cwiseMin(lam);
  return out;
}

double ScaledOtAdapter::dual_divergence(const ScaledPlan& y1, const ScaledPlan& y0) const {
  return kl_divergence(y1.entries, y0.entries);
}

double ScaledOtAdapter::coupling(const Vector& dx, const ScaledPlan& y1,
                                 const ScaledPlan& y0) const {
  const Matrix d = y1.entries - y0.entries;
  return dx.head(inst_.n).dot(d.rowwise().sum()) +
         dx.tail(inst_.n).dot(d.colwise().sum().transpose());
}

Vector ScaledOtAdapter::flatten(const ScaledPlan& y) const {
  return Eigen::Map<const Vector>(y.entries.data(), y.entries.size());
}

Matrix ScaledOtAdapter::round_plan(const Vector& y_flat) const {
  ScaledPlan p;
  p.delta = delta_;
  p.entries = Eigen::Map<const Matrix>(y_flat.data(), inst_.n, inst_.n);
  return round_to_feasible(p.unscale(), inst_.mu.values(), inst_.nu.values(),
                           ResidualCoupling::sparse);
}

GapReport ScaledOtAdapter::gap(const Vector& x, const Vector& y_flat) const {
  const Index n = inst_.n;
  const Matrix xd = Eigen::Map<const Matrix>(y_flat.data(), n, n);
  const Matrix& c = inst_.cost.entries();
  const Vector u = x.head(n), v = x.tail(n);
  const double lam = inst_.lambda;
  const double floor = delta_ / static_cast<double>(n * n);

  GapReport r;
  const Matrix reduced = c - apply_K(u, v);
  const double primal = dot(c, xd) + lam * (mu_delta_ - xd.rowwise().sum()).lpNorm<1>() +
                        lam * (nu_delta_ - xd.colwise().sum().transpose()).lpNorm<1>();
  const double dual_value = u.dot(mu_delta_) + v.dot(nu_delta_) +
                            (1.0 - delta_) * reduced.minCoeff() + floor * reduced.sum();
  r.raw = primal - dual_value;

  const Matrix rounded = round_plan(y_flat);
  const DualBound lb = improved_dual_bound(c, inst_.mu.values(), inst_.nu.values(), u, v);
  r.rounded = std::max(0.0, dot(c, rounded) - lb.value);
  r.primal_value = dot(inst_.cost.raw(), rounded);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

template <class Adapter>
RunResult<typename Adapter::Dual> dispatch(const EngineConfig& cfg, bool linesearch,
                                           Adapter& adapter) {
  if (linesearch) return run_linesearch(cfg, adapter, adapter.initial_x(), adapter.initial_plan());
  return run_constant_steps(cfg, adapter, adapter.initial_x(), adapter.initial_plan());
}

template <class Dual>
void copy_run_stats(const RunResult<Dual>& run, OtSolution& sol) {
  sol.converged = run.converged;
  sol.iterations = run.iterations;
  sol.inner_total = run.inner_total;
  sol.T = run.T;
  sol.invariant_violations = run.invariant_violations;
  sol.trace = run.trace;
  sol.steps = run.steps;
  sol.gap_raw = run.best.raw;
  sol.gap_certificate = run.best.rounded;
}

}  // namespace

OtSolution solve_eps(const OtInstance& inst, double eps, const OtOptions& options) {
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (inst.n < 2) throw InvalidInstance("solve needs n >= 2");
  const double n = static_cast<double>(inst.n);
  const double log_n = std::log(n);
  const double lambda = inst.lambda;
  const bool fixed = options.mode == OtMode::fixed_marginal;
  const double L = fixed ? 1.0 : std::sqrt(2.0);

  OtSolution sol;
  EngineConfig cfg;
  cfg.rho = options.rho;
  cfg.L = L;
  cfg.eps = eps;
  cfg.max_outer = options.max_outer;
  cfg.max_inner = options.max_inner;
  cfg.gap_every = options.gap_every > 0 ? options.gap_every
                                        : static_cast<long>(std::ceil(std::sqrt(n)));
  cfg.keep_steps = options.keep_steps;
  cfg.candidates = options.candidates.value_or(
      options.mode == OtMode::scaled ? CandidatePolicy::last : CandidatePolicy::both);

  const double beta_plain = 2.0 * log_n / (lambda * lambda * n);
  if (options.variant == OtVariant::plain) {
    sol.gamma_reg = 0.0;
    cfg.gamma = 0.0;
    cfg.beta0 = beta_plain;
  } else {
    sol.gamma_reg = options.gamma_reg.value_or(eps / (4.0 * log_n));
    if (!(sol.gamma_reg >= 0.0)) throw UsageError("regularization gamma must be nonnegative");
    cfg.gamma = sol.gamma_reg;
    const double beta1 = options.beta1_mult * beta_plain;
    cfg.beta0 = beta0_for_beta1(beta1, cfg.gamma, L);
    if (cfg.gamma > L / cfg.rho) throw UsageError("regularization gamma exceeds L/rho");
  }
  sol.config = cfg;

  if (options.mode == OtMode::scaled) {
    ScaledOtAdapter adapter(inst, options.delta, sol.gamma_reg);
    const auto run = dispatch(cfg, options.linesearch, adapter);
    copy_run_stats(run, sol);
    sol.plan_rounded = adapter.round_plan(run.best_y);
    const Vector u = run.best_x.head(inst.n), v = run.best_x.tail(inst.n);
    const DualBound lb =
        improved_dual_bound(inst.cost.entries(), inst.mu.values(), inst.nu.values(), u, v);
    sol.dual = lb.dual;
    sol.lower_bound = lb.value + inst.cost.offset(inst.mu.values(), inst.nu.values());
  } else {
    OtAdapter adapter(inst, fixed, sol.gamma_reg);
    const auto run = dispatch(cfg, options.linesearch, adapter);
    copy_run_stats(run, sol);
    sol.plan_rounded =
        round_to_feasible(adapter.unflatten(run.best_y), inst.mu.values(), inst.nu.values());
    const OtDual d = adapter.split(run.best_x);
    const DualBound lb =
        improved_dual_bound(inst.cost.entries(), inst.mu.values(), inst.nu.values(), d.u, d.v);
    sol.dual = lb.dual;
    sol.lower_bound = lb.value + inst.cost.offset(inst.mu.values(), inst.nu.values());
  }
  sol.value = dot(inst.cost.raw(), sol.plan_rounded);
  sol.support = support_fraction(sol.plan_rounded);
  return sol;
}

}  // namespace otwb
