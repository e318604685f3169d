#include "otwb/wb_solver.hpp"

#include "otwb/error.hpp"
#include "otwb/ot_solver.hpp"
#include "otwb/parallel.hpp"

#include <cmath>

namespace otwb {

namespace {

double dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

Vector row_ctransform(const Matrix& c, const Vector& v) {
  return (c.rowwise() - v.transpose()).rowwise().minCoeff();
}

}  // namespace

Vector wb_closure(const std::vector<Vector>& v_head, const Vector& weights) {
  const Index m = weights.size();
  Vector acc = Vector::Zero(v_head.front().size());
  for (Index l = 0; l + 1 < m; ++l) acc += weights[l] * v_head[static_cast<std::size_t>(l)];
  return -acc / weights[m - 1];
}

double wb_coupling_norm(const WbInstance& inst, bool fixed_marginal) {
  const double wm = inst.weights[inst.m - 1];
  return fixed_marginal ? 1.0 / std::sqrt(wm) : std::sqrt(1.0 + 1.0 / wm);
}

double wb_gap(const std::vector<Matrix>& plans, const WbDual& dual, const WbInstance& inst) {
  const Index m = inst.m;
  const double lam = inst.lambda;
  const Vector bary = plans.back().colwise().sum().transpose();
  double primal = 0.0, dual_value = 0.0;
  for (Index l = 0; l < m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    const double w = inst.weights[l];
    const Matrix& c = inst.cost(l).entries();
    const Vector& mu = inst.marginals[ls].values();
    primal += w * (dot(c, plans[ls]) + lam * (mu - plans[ls].rowwise().sum()).lpNorm<1>());
    if (l + 1 < m) primal += w * lam * (bary - plans[ls].colwise().sum().transpose()).lpNorm<1>();
    const Matrix reduced = c - apply_K(dual.u[ls], dual.v[ls]);
    dual_value += w * (dual.u[ls].dot(mu) + reduced.minCoeff());
  }
  return primal - dual_value;
}

std::vector<Matrix> wb_round(const std::vector<Matrix>& plans, const WbInstance& inst) {
  const Index m = inst.m;
  std::vector<Matrix> out(static_cast<std::size_t>(m));
  const Vector& mu_m = inst.marginals.back().values();
  const Vector cols_m = plans.back().colwise().sum().transpose();
  out.back() = round_to_feasible(plans.back(), mu_m, cols_m * (mu_m.sum() / cols_m.sum()));
  const Vector bary = out.back().colwise().sum().transpose();
  parallel_for(m - 1, [&](long l) {
    const auto ls = static_cast<std::size_t>(l);
    out[ls] = round_to_feasible(plans[ls], inst.marginals[ls].values(), bary);
  });
  return out;
}

double wb_dual_bound(const std::vector<Vector>& v, const WbInstance& inst) {
  double total = 0.0;
  for (Index l = 0; l < inst.m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    total += inst.weights[l] *
             row_ctransform(inst.cost(l).entries(), v[ls]).dot(inst.marginals[ls].values());
  }
  return total;
}

// ---------------------------------------------------------------------------

WbAdapter::WbAdapter(const WbInstance& inst, bool fixed_marginal, double gamma_reg)
    : inst_(inst), fixed_marginal_(fixed_marginal), gamma_reg_(gamma_reg) {}

Index WbAdapter::x_size() const {
  return (fixed_marginal_ ? 0 : inst_.m * inst_.n) + (inst_.m - 1) * inst_.n;
}

Vector WbAdapter::u_block(const Vector& x, Index l) const { return x.segment(l * inst_.n, inst_.n); }

Vector WbAdapter::v_block(const Vector& x, Index l) const {
  const Index base = fixed_marginal_ ? 0 : inst_.m * inst_.n;
  return x.segment(base + l * inst_.n, inst_.n);
}

WbDual WbAdapter::split(const Vector& x) const {
  WbDual d;
  for (Index l = 0; l + 1 < inst_.m; ++l) d.v.push_back(v_block(x, l));
  d.v.push_back(wb_closure(d.v, inst_.weights));
  for (Index l = 0; l < inst_.m; ++l) {
    d.u.push_back(fixed_marginal_
                      ? row_ctransform(inst_.cost(l).entries(), d.v[static_cast<std::size_t>(l)])
                      : u_block(x, l));
  }
  return d;
}

WbPlans WbAdapter::initial_plans() const {
  WbPlans plans;
  for (Index l = 0; l < inst_.m; ++l) {
    plans.push_back(fixed_marginal_
                        ? TransportPlan::row_product(inst_.marginals[static_cast<std::size_t>(l)].values())
                        : TransportPlan::uniform(inst_.n));
  }
  return plans;
}

WbPlans WbAdapter::dual_prox(const WbPlans& y, const Vector& xbar, double sigma) const {
  const Index m = inst_.m;
  std::vector<Vector> v;
  for (Index l = 0; l + 1 < m; ++l) v.push_back(v_block(xbar, l));
  v.push_back(wb_closure(v, inst_.weights));
  WbPlans out(static_cast<std::size_t>(m));
  parallel_for(m, [&](long l) {
    const auto ls = static_cast<std::size_t>(l);
    const Matrix& c = inst_.cost(l).entries();
    if (fixed_marginal_) {
      const Matrix grad = c.rowwise() - v[ls].transpose();
      out[ls] = entropy_prox_fixed_marginal(y[ls], grad, sigma, gamma_reg_,
                                            inst_.marginals[ls].values());
    } else {
      const Matrix grad = c - apply_K(u_block(xbar, l), v[ls]);
      out[ls] = entropy_prox_regularized(y[ls], grad, sigma, gamma_reg_);
    }
  });
  plan_passes_ += m;
  return out;
}

Vector WbAdapter::primal_prox(const Vector& x, const WbPlans& y_new, double tau) const {
  const Index n = inst_.n, m = inst_.m;
  const double lam = inst_.lambda;
  Vector out(x.size());
  if (!fixed_marginal_) {
    for (Index l = 0; l < m; ++l) {
      const auto ls = static_cast<std::size_t>(l);
      out.segment(l * n, n) =
          (u_block(x, l) + tau * (inst_.marginals[ls].values() - y_new[ls].row_sums()))
              .cwiseMax(-lam)
              .cwiseMin(lam);
    }
  }
  const Vector bary = y_new.back().col_sums();
  const Index base = fixed_marginal_ ? 0 : m * n;
  for (Index l = 0; l + 1 < m; ++l) {
    out.segment(base + l * n, n) =
        (v_block(x, l) + tau * (bary - y_new[static_cast<std::size_t>(l)].col_sums()))
            .cwiseMax(-lam)
            .cwiseMin(lam);
  }
  return out;
}

double WbAdapter::primal_sqnorm(const Vector& dx) const {
  double total = 0.0;
  if (!fixed_marginal_) {
    for (Index l = 0; l < inst_.m; ++l) total += inst_.weights[l] * u_block(dx, l).squaredNorm();
  }
  for (Index l = 0; l + 1 < inst_.m; ++l) total += inst_.weights[l] * v_block(dx, l).squaredNorm();
  return total;
}

double WbAdapter::dual_divergence(const WbPlans& y1, const WbPlans& y0) const {
  double total = 0.0;
  for (Index l = 0; l < inst_.m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    total += inst_.weights[l] * kl_divergence(y1[ls], y0[ls]);
  }
  return total;
}

double WbAdapter::coupling(const Vector& dx, const WbPlans& y1, const WbPlans& y0) const {
  const Index m = inst_.m;
  const Vector dbary = (y1.back().weights() - y0.back().weights()).colwise().sum().transpose();
  double total = 0.0;
  for (Index l = 0; l < m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    const double w = inst_.weights[l];
    const Matrix d = y1[ls].weights() - y0[ls].weights();
    if (!fixed_marginal_) total += w * u_block(dx, l).dot(d.rowwise().sum());
    if (l + 1 < m) total += w * v_block(dx, l).dot(d.colwise().sum().transpose() - dbary);
  }
  return total;
}

Vector WbAdapter::flatten(const WbPlans& y) const {
  const Index block = inst_.n * inst_.n;
  Vector out(block * inst_.m);
  for (Index l = 0; l < inst_.m; ++l) {
    const Matrix& w = y[static_cast<std::size_t>(l)].weights();
    out.segment(l * block, block) = Eigen::Map<const Vector>(w.data(), block);
  }
  return out;
}

std::vector<Matrix> WbAdapter::unflatten(const Vector& y_flat) const {
  const Index n = inst_.n, block = n * n;
  std::vector<Matrix> plans;
  for (Index l = 0; l < inst_.m; ++l) {
    plans.push_back(Eigen::Map<const Matrix>(y_flat.data() + l * block, n, n));
  }
  return plans;
}

GapReport WbAdapter::gap(const Vector& x, const Vector& y_flat) const {
  const std::vector<Matrix> plans = unflatten(y_flat);
  const WbDual d = split(x);
  GapReport r;
  r.raw = wb_gap(plans, d, inst_);
  const std::vector<Matrix> rounded = wb_round(plans, inst_);
  double primal = 0.0, raw_value = 0.0;
  for (Index l = 0; l < inst_.m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    primal += inst_.weights[l] * dot(inst_.cost(l).entries(), rounded[ls]);
    raw_value += inst_.weights[l] * dot(inst_.cost(l).raw(), rounded[ls]);
  }
  r.rounded = std::max(0.0, primal - wb_dual_bound(d.v, inst_));
  r.primal_value = raw_value;
  return r;
}

// ---------------------------------------------------------------------------

WbSolution solve_wb(const WbInstance& inst, double eps, const WbOptions& options) {
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (inst.n < 2) throw InvalidInstance("barycenter solve needs n >= 2");
  const double n = static_cast<double>(inst.n);
  const double lambda = inst.lambda;
  const double L = wb_coupling_norm(inst, options.fixed_marginal);

  EngineConfig cfg;
  cfg.rho = options.rho;
  cfg.L = L;
  cfg.eps = eps;
  cfg.max_outer = options.max_outer;
  cfg.max_inner = options.max_inner;
  cfg.gap_every = options.gap_every > 0 ? options.gap_every
                                        : static_cast<long>(std::ceil(std::sqrt(n)));
  cfg.candidates = options.candidates;
  cfg.keep_steps = options.keep_steps;
  cfg.gamma = options.gamma_reg;
  const double beta1 = options.beta_mult * 2.0 * std::log(n) / (lambda * lambda * n);
  cfg.beta0 = beta0_for_beta1(beta1, cfg.gamma, L);

  WbAdapter adapter(inst, options.fixed_marginal, options.gamma_reg);
  const auto run = options.linesearch
                       ? run_linesearch(cfg, adapter, adapter.initial_x(), adapter.initial_plans())
                       : run_constant_steps(cfg, adapter, adapter.initial_x(), adapter.initial_plans());

  WbSolution sol;
  sol.config = cfg;
  sol.converged = run.converged;
  sol.iterations = run.iterations;
  sol.inner_total = run.inner_total;
  sol.invariant_violations = run.invariant_violations;
  sol.plan_passes = adapter.plan_passes();
  sol.trace = run.trace;
  sol.steps = run.steps;
  sol.gap_raw = run.best.raw;
  sol.gap_certificate = run.best.rounded;
  sol.dual = adapter.split(run.best_x);
  sol.plans_rounded = wb_round(adapter.unflatten(run.best_y), inst);
  sol.barycenter = sol.plans_rounded.back().colwise().sum().transpose();
  for (Index l = 0; l < inst.m; ++l) {
    sol.value += inst.weights[l] * dot(inst.cost(l).raw(), sol.plans_rounded[static_cast<std::size_t>(l)]);
  }
  return sol;
}

}  // namespace otwb
