#include "otwb/agd_baseline.hpp"

#include "otwb/error.hpp"

#include <chrono>
#include <cmath>

namespace otwb {

namespace {

struct DeltaMarginals {
  Vector mu;
  Vector nu;
};

DeltaMarginals delta_marginals(const OtInstance& inst, double delta) {
  const double n = static_cast<double>(inst.n);
  return {((1.0 - delta) * inst.mu.values().array() + delta / n).matrix(),
          ((1.0 - delta) * inst.nu.values().array() + delta / n).matrix()};
}

}  // namespace

double phi_from_plan(const Vector& u, const Vector& v, const Matrix& plan, const OtInstance& inst,
                     double gamma, double delta) {
  const DeltaMarginals md = delta_marginals(inst, delta);
  const Matrix reduced = inst.cost.entries() - apply_K(u, v);
  const double entropy = (plan.array() * plan.array().log()).sum();
  return u.dot(md.mu) + v.dot(md.nu) + (reduced.array() * plan.array()).sum() + gamma * entropy;
}

PhiEval phi_and_grad(const Vector& u, const Vector& v, const OtInstance& inst, double gamma,
                     double delta) {
  if (!(gamma > 0.0)) throw UsageError("phi needs gamma > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("phi needs delta in (0, 1)");
  const Index n = inst.n;
  const Matrix e = (apply_K(u, v) - inst.cost.entries()) / gamma;
  const double mx = e.maxCoeff();
  if (!std::isfinite(mx)) throw NumericalFailure("phi: non-finite exponent");
  const Matrix z = (e.array() - mx).exp().matrix();
  const double floor = delta / static_cast<double>(n * n);

  PhiEval out;
  out.root = scaled_root_newton(z, floor);
  out.plan.delta = delta;
  out.plan.entries = scaled_plan_from_root(z, out.root.s, floor);
  const DeltaMarginals md = delta_marginals(inst, delta);
  out.grad_u = md.mu - out.plan.entries.rowwise().sum();
  out.grad_v = md.nu - out.plan.entries.colwise().sum().transpose();
  out.value = phi_from_plan(u, v, out.plan.entries, inst, gamma, delta);
  return out;
}

AgdReport solve_agd(const OtInstance& inst, double eps, const AgdOptions& options) {
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (inst.n < 2) throw InvalidInstance("agd needs n >= 2");
  const Index n = inst.n;
  const double nd = static_cast<double>(n);
  AgdReport rep;
  rep.gamma = options.gamma.value_or(eps / (4.0 * std::log(nd)));
  const double gamma = rep.gamma, delta = options.delta;
  const long every =
      options.gap_every > 0 ? options.gap_every : static_cast<long>(std::ceil(std::sqrt(nd)));
  const auto start = std::chrono::steady_clock::now();

  const Matrix& c = inst.cost.entries();
  const Vector& mu = inst.mu.values();
  const Vector& nu = inst.nu.values();

  // x = (u, v) stacked.
  auto eval = [&](const Vector& x) {
    ++rep.oracle_calls;
    return phi_and_grad(x.head(n), x.tail(n), inst, gamma, delta);
  };
  auto grad_of = [&](const PhiEval& p) {
    Vector g(2 * n);
    g << p.grad_u, p.grad_v;
    return g;
  };

  Vector x = Vector::Zero(2 * n), y = x;
  PhiEval px = eval(x);
  double t = 1.0;
  double L = 1.0 / gamma;
  Matrix plan_sum = Matrix::Zero(n, n);
  double weight_sum = 0.0;
  rep.phi_history.push_back(px.value);

  double best_gap = std::numeric_limits<double>::infinity();
  Matrix best_plan;
  Vector best_x = x;

  auto certify = [&](long k, const Matrix& plan_delta, const Vector& xd) {
    ScaledPlan sp{plan_delta, delta};
    const Matrix rounded = round_to_feasible(sp.unscale(), mu, nu);
    const DualBound lb = improved_dual_bound(c, mu, nu, xd.head(n), xd.tail(n));
    const double cert = std::max(0.0, (c.array() * rounded.array()).sum() - lb.value);
    if (cert < best_gap) {
      best_gap = cert;
      best_plan = rounded;
      best_x = xd;
    }
    TraceRow row;
    row.iter = k;
    row.tau = 1.0 / L;
    row.sigma = 0.0;
    row.beta = 0.0;
    row.theta = t;
    row.inner_iters = static_cast<long>(rep.backtracking.size());
    row.gap_raw = cert;
    row.gap_rounded = cert;
    row.primal_value = (inst.cost.raw().array() * rounded.array()).sum();
    row.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rep.trace.push_back(row);
  };
  certify(0, px.plan.entries, x);

  for (long k = 1; k <= options.max_iter && best_gap > eps; ++k) {
    const PhiEval py = eval(y);
    const Vector gy = grad_of(py);
    // Allow the estimate to relax, then grow it until the ascent test holds.
    const double L_start = L;
    L = std::max(L * 0.5, 1e-12);
    if (L != L_start) rep.backtracking.push_back({k, L_start, L, false});
    Vector z;
    PhiEval pz;
    while (true) {
      z = y + gy / L;
      pz = eval(z);
      const Vector d = z - y;
      const double model = py.value + gy.dot(d) - 0.5 * L * d.squaredNorm();
      if (pz.value >= model - 1e-12 * (std::abs(model) + 1.0)) break;
      rep.backtracking.push_back({k, L, 2.0 * L, true});
      L *= 2.0;
      if (L > 1e300) throw NumericalFailure("agd: smoothness estimate diverged");
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    Vector x_next = x;
    PhiEval px_next = px;
    if (pz.value >= px.value) {
      x_next = z;
      px_next = pz;
    }
    y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x);

    const double w = t / L;
    plan_sum += w * py.plan.entries;
    weight_sum += w;

    x = std::move(x_next);
    px = std::move(px_next);
    t = t_next;
    rep.phi_history.push_back(px.value);
    rep.iterations = k;

    if (k % every == 0 || k == options.max_iter) {
      certify(k, plan_sum / weight_sum, x);
      if (best_gap > eps) certify(k, px.plan.entries, x);
    }
  }

  rep.plan_rounded = best_plan;
  const DualBound lb = improved_dual_bound(c, mu, nu, best_x.head(n), best_x.tail(n));
  rep.dual = lb.dual;
  rep.gap_certificate = best_gap;
  rep.converged = best_gap <= eps;
  rep.value = (inst.cost.raw().array() * best_plan.array()).sum();
  return rep;
}

}  // namespace otwb
