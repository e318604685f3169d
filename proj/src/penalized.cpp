#include "otwb/penalized.hpp"

#include "otwb/error.hpp"
#include "otwb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace otwb {

namespace {

double dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

Vector row_ctransform(const Matrix& c, const Vector& v) {
  return (c.rowwise() - v.transpose()).rowwise().minCoeff();
}

// Σ a ln(a/b) - a + b, the divergence of the unnormalized entropy.
double kl_unnormalized(const Vector& a, const Vector& b) {
  double total = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) total += a[i] * (std::log(a[i]) - std::log(b[i]));
    total += b[i] - a[i];
  }
  return total;
}

double weighted_median(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  double acc = 0.0;
  for (const auto& [x, w] : pts) {
    acc += w;
    if (acc >= 0.5 - 1e-15) return x;
  }
  return pts.back().first;
}

}  // namespace

Penalty Penalty::quadratic(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw UsageError("quadratic penalty needs eta > 0");
  return Penalty{Kind::quadratic, eta};
}

Penalty Penalty::tv(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError("tv penalty needs alpha > 0");
  return Penalty{Kind::tv, alpha};
}

Penalty Penalty::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("penalty must look like quad:<eta> or tv:<alpha>");
  const std::string kind = text.substr(0, colon);
  double param = 0.0;
  try {
    std::size_t used = 0;
    param = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw UsageError("bad penalty parameter in '" + text + "'");
  }
  if (kind == "quad") return quadratic(param);
  if (kind == "tv") return tv(param);
  throw UsageError("unknown penalty kind '" + kind + "'");
}

std::string Penalty::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << (kind == Kind::quadratic ? "quad:" : "tv:") << param;
  return os.str();
}

double Penalty::value(const Vector& residual) const {
  if (kind == Kind::quadratic) return 0.5 * param * residual.squaredNorm();
  return param * residual.lpNorm<1>();
}

double Penalty::conjugate(const Vector& v) const {
  if (kind == Kind::quadratic) return v.squaredNorm() / (2.0 * param);
  if (v.size() > 0 && v.cwiseAbs().maxCoeff() > param * (1.0 + 1e-12)) {
    return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

Vector penalty_prox(const Vector& vbar, const Vector& residual, double tau, const Penalty& penalty) {
  const Vector step = vbar + tau * residual;
  if (penalty.kind == Penalty::Kind::quadratic) return penalty.param / (penalty.param + tau) * step;
  return step.cwiseMax(-penalty.param).cwiseMin(penalty.param);
}

// ---------------------------------------------------------------------------

UnbalancedOtAdapter::UnbalancedOtAdapter(const UnbalancedOtInstance& inst, Penalty penalty,
                                         double gamma_reg)
    : inst_(inst), penalty_(penalty), gamma_reg_(gamma_reg) {}

TransportPlan UnbalancedOtAdapter::initial_plan() const {
  return TransportPlan::row_product(inst_.mu.values());
}

TransportPlan UnbalancedOtAdapter::dual_prox(const TransportPlan& y, const Vector& xbar,
                                             double sigma) const {
  const Matrix grad = inst_.cost.entries().rowwise() - xbar.transpose();
  return entropy_prox_fixed_marginal(y, grad, sigma, gamma_reg_, inst_.mu.values());
}

Vector UnbalancedOtAdapter::primal_prox(const Vector& x, const TransportPlan& y_new,
                                        double tau) const {
  return penalty_prox(x, inst_.nu - y_new.col_sums(), tau, penalty_);
}

double UnbalancedOtAdapter::dual_divergence(const TransportPlan& y1, const TransportPlan& y0) const {
  return kl_divergence(y1, y0);
}

double UnbalancedOtAdapter::coupling(const Vector& dx, const TransportPlan& y1,
                                     const TransportPlan& y0) const {
  return dx.dot((y1.weights() - y0.weights()).colwise().sum().transpose());
}

Vector UnbalancedOtAdapter::flatten(const TransportPlan& y) const {
  return Eigen::Map<const Vector>(y.weights().data(), y.weights().size());
}

double UnbalancedOtAdapter::primal_objective(const Matrix& plan) const {
  return dot(inst_.cost.entries(), plan) +
         penalty_.value(inst_.nu - plan.colwise().sum().transpose());
}

double UnbalancedOtAdapter::dual_objective(const Vector& v) const {
  return v.dot(inst_.nu) - penalty_.conjugate(v) +
         row_ctransform(inst_.cost.entries(), v).dot(inst_.mu.values());
}

GapReport UnbalancedOtAdapter::gap(const Vector& x, const Vector& y_flat) const {
  const Matrix plan = Eigen::Map<const Matrix>(y_flat.data(), inst_.n, inst_.n);
  GapReport r;
  const double p = primal_objective(plan);
  r.raw = std::max(0.0, p - dual_objective(x));
  r.rounded = r.raw;
  r.primal_value = p + inst_.cost.row_offset(inst_.mu.values());
  return r;
}

UnbalancedOtReport solve_unbalanced_ot(const UnbalancedOtInstance& inst, const Penalty& penalty,
                                       double eps, const PenalizedOptions& options) {
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (inst.n < 2) throw InvalidInstance("unbalanced solve needs n >= 2");
  const double n = static_cast<double>(inst.n);
  const double lambda_eff = penalty.kind == Penalty::Kind::tv
                                ? penalty.param
                                : std::max(inst.cost.max_entry() / 2.0, 1e-12);

  EngineConfig cfg;
  cfg.rho = options.rho;
  cfg.L = 1.0;
  cfg.eps = eps;
  cfg.max_outer = options.max_outer;
  cfg.max_inner = options.max_inner;
  cfg.gap_every = options.gap_every > 0 ? options.gap_every
                                        : static_cast<long>(std::ceil(std::sqrt(n)));
  cfg.keep_steps = options.keep_steps;
  cfg.gamma = options.gamma_reg;
  cfg.beta0 = beta0_for_beta1(
      options.beta_mult * 2.0 * std::log(n) / (lambda_eff * lambda_eff * n), cfg.gamma, cfg.L);

  UnbalancedOtAdapter adapter(inst, penalty, options.gamma_reg);
  const auto run =
      options.linesearch
          ? run_linesearch(cfg, adapter, adapter.initial_x(), adapter.initial_plan())
          : run_constant_steps(cfg, adapter, adapter.initial_x(), adapter.initial_plan());

  UnbalancedOtReport rep;
  rep.config = cfg;
  rep.plan = Eigen::Map<const Matrix>(run.best_y.data(), inst.n, inst.n);
  rep.v = run.best_x;
  rep.transport_cost = dot(inst.cost.raw(), rep.plan);
  rep.penalty_term = penalty.value(inst.nu - rep.plan.colwise().sum().transpose());
  rep.value = rep.transport_cost + rep.penalty_term;
  rep.gap = run.best.rounded;
  rep.gap_raw = run.best.raw;
  rep.converged = run.converged;
  rep.iterations = run.iterations;
  rep.inner_total = run.inner_total;
  rep.trace = run.trace;
  rep.steps = run.steps;
  return rep;
}

// ---------------------------------------------------------------------------

UnbalancedWbAdapter::UnbalancedWbAdapter(const WbInstance& inst, Penalty penalty, double gamma_reg)
    : inst_(inst), penalty_(penalty), gamma_reg_(gamma_reg) {}

UnbalancedWbState UnbalancedWbAdapter::initial_state() const {
  UnbalancedWbState s;
  for (Index l = 0; l < inst_.m; ++l) {
    s.plans.push_back(TransportPlan::row_product(inst_.marginals[static_cast<std::size_t>(l)].values()));
  }
  s.nu = Vector::Constant(inst_.n, 1.0 / static_cast<double>(inst_.n));
  return s;
}

std::vector<Vector> UnbalancedWbAdapter::blocks(const Vector& x) const {
  std::vector<Vector> v;
  for (Index l = 0; l < inst_.m; ++l) v.push_back(x.segment(l * inst_.n, inst_.n));
  return v;
}

UnbalancedWbState UnbalancedWbAdapter::dual_prox(const UnbalancedWbState& y, const Vector& xbar,
                                                 double sigma) const {
  const Index m = inst_.m, n = inst_.n;
  UnbalancedWbState out;
  out.plans.resize(static_cast<std::size_t>(m));
  parallel_for(m, [&](long l) {
    const auto ls = static_cast<std::size_t>(l);
    const Matrix grad = inst_.cost(l).entries().rowwise() - xbar.segment(l * n, n).transpose();
    out.plans[ls] = entropy_prox_fixed_marginal(y.plans[ls], grad, sigma, gamma_reg_,
                                                inst_.marginals[ls].values());
  });
  Vector wsum = Vector::Zero(n);
  for (Index l = 0; l < m; ++l) wsum += inst_.weights[l] * xbar.segment(l * n, n);
  out.nu = (y.nu.array() * (-sigma * wsum.array()).exp()).matrix();
  return out;
}

Vector UnbalancedWbAdapter::primal_prox(const Vector& x, const UnbalancedWbState& y_new,
                                        double tau) const {
  const Index n = inst_.n;
  Vector out(x.size());
  for (Index l = 0; l < inst_.m; ++l) {
    out.segment(l * n, n) = penalty_prox(
        x.segment(l * n, n), y_new.nu - y_new.plans[static_cast<std::size_t>(l)].col_sums(), tau,
        penalty_);
  }
  return out;
}

double UnbalancedWbAdapter::primal_sqnorm(const Vector& dx) const {
  double total = 0.0;
  for (Index l = 0; l < inst_.m; ++l) {
    total += inst_.weights[l] * dx.segment(l * inst_.n, inst_.n).squaredNorm();
  }
  return total;
}

double UnbalancedWbAdapter::dual_divergence(const UnbalancedWbState& y1,
                                            const UnbalancedWbState& y0) const {
  double total = kl_unnormalized(y1.nu, y0.nu);
  for (Index l = 0; l < inst_.m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    total += inst_.weights[l] * kl_divergence(y1.plans[ls], y0.plans[ls]);
  }
  return total;
}

double UnbalancedWbAdapter::coupling(const Vector& dx, const UnbalancedWbState& y1,
                                     const UnbalancedWbState& y0) const {
  const Index n = inst_.n;
  const Vector dnu = y1.nu - y0.nu;
  double total = 0.0;
  for (Index l = 0; l < inst_.m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    const Vector dcols =
        (y1.plans[ls].weights() - y0.plans[ls].weights()).colwise().sum().transpose();
    total += inst_.weights[l] * dx.segment(l * n, n).dot(dcols - dnu);
  }
  return total;
}

Vector UnbalancedWbAdapter::flatten(const UnbalancedWbState& y) const {
  const Index block = inst_.n * inst_.n;
  Vector out(block * inst_.m + inst_.n);
  for (Index l = 0; l < inst_.m; ++l) {
    const Matrix& w = y.plans[static_cast<std::size_t>(l)].weights();
    out.segment(l * block, block) = Eigen::Map<const Vector>(w.data(), block);
  }
  out.tail(inst_.n) = y.nu;
  return out;
}

std::vector<Matrix> UnbalancedWbAdapter::plans_of(const Vector& y_flat) const {
  const Index n = inst_.n, block = n * n;
  std::vector<Matrix> plans;
  for (Index l = 0; l < inst_.m; ++l) {
    plans.push_back(Eigen::Map<const Matrix>(y_flat.data() + l * block, n, n));
  }
  return plans;
}

Vector UnbalancedWbAdapter::nu_of(const Vector& y_flat) const { return y_flat.tail(inst_.n); }

Vector UnbalancedWbAdapter::best_nu(const std::vector<Matrix>& plans) const {
  const Index n = inst_.n;
  std::vector<Vector> cols;
  for (const auto& p : plans) cols.push_back(p.colwise().sum().transpose());
  Vector nu = Vector::Zero(n);
  if (penalty_.kind == Penalty::Kind::quadratic) {
    for (Index l = 0; l < inst_.m; ++l) nu += inst_.weights[l] * cols[static_cast<std::size_t>(l)];
    return nu;
  }
  for (Index j = 0; j < n; ++j) {
    std::vector<std::pair<double, double>> pts;
    for (Index l = 0; l < inst_.m; ++l) pts.emplace_back(cols[static_cast<std::size_t>(l)][j], inst_.weights[l]);
    nu[j] = weighted_median(std::move(pts));
  }
  return nu;
}

double UnbalancedWbAdapter::primal_objective(const std::vector<Matrix>& plans,
                                             const Vector& nu) const {
  double total = 0.0;
  for (Index l = 0; l < inst_.m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    total += inst_.weights[l] * (dot(inst_.cost(l).entries(), plans[ls]) +
                                 penalty_.value(nu - plans[ls].colwise().sum().transpose()));
  }
  return total;
}

double UnbalancedWbAdapter::dual_objective(const std::vector<Vector>& v_in) const {
  const Index n = inst_.n, m = inst_.m;
  std::vector<Vector> v = v_in;
  for (Index j = 0; j < n; ++j) {
    double s = 0.0;
    for (Index l = 0; l < m; ++l) s += inst_.weights[l] * v[static_cast<std::size_t>(l)][j];
    if (s >= 0.0) continue;
    if (penalty_.kind == Penalty::Kind::quadratic) {
      for (auto& vl : v) vl[j] -= s;
      continue;
    }
    // Smallest uniform raise t with Σ w_l min(v_lj + t, α) >= 0.
    const double alpha = penalty_.param;
    auto raised = [&](double t) {
      double acc = 0.0;
      for (Index l = 0; l < m; ++l) {
        acc += inst_.weights[l] * std::min(v[static_cast<std::size_t>(l)][j] + t, alpha);
      }
      return acc;
    };
    double lo = 0.0, hi = 2.0 * alpha + std::abs(s);
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (raised(mid) >= 0.0 ? hi : lo) = mid;
    }
    for (auto& vl : v) vl[j] = std::min(vl[j] + hi, alpha);
  }
  double total = 0.0;
  for (Index l = 0; l < m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    total += inst_.weights[l] *
             (row_ctransform(inst_.cost(l).entries(), v[ls]).dot(inst_.marginals[ls].values()) -
              penalty_.conjugate(v[ls]));
  }
  return total;
}

GapReport UnbalancedWbAdapter::gap(const Vector& x, const Vector& y_flat) const {
  const std::vector<Matrix> plans = plans_of(y_flat);
  const double p = std::min(primal_objective(plans, nu_of(y_flat)),
                            primal_objective(plans, best_nu(plans)));
  GapReport r;
  r.raw = std::max(0.0, p - dual_objective(blocks(x)));
  r.rounded = r.raw;
  double offset = 0.0;
  for (Index l = 0; l < inst_.m; ++l) {
    offset += inst_.weights[l] * inst_.cost(l).row_offset(inst_.marginals[static_cast<std::size_t>(l)].values());
  }
  r.primal_value = p + offset;
  return r;
}

UnbalancedWbReport solve_unbalanced_wb(const WbInstance& inst, const Penalty& penalty, double eps,
                                       const PenalizedOptions& options) {
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (inst.n < 2) throw InvalidInstance("unbalanced barycenter needs n >= 2");
  const double n = static_cast<double>(inst.n);
  const double lambda_eff =
      penalty.kind == Penalty::Kind::tv ? penalty.param : std::max(inst.lambda, 1e-12);

  EngineConfig cfg;
  cfg.rho = options.rho;
  cfg.L = std::sqrt(2.0);
  cfg.eps = eps;
  cfg.max_outer = options.max_outer;
  cfg.max_inner = options.max_inner;
  cfg.gap_every = options.gap_every > 0 ? options.gap_every
                                        : static_cast<long>(std::ceil(std::sqrt(n)));
  cfg.keep_steps = options.keep_steps;
  cfg.gamma = options.gamma_reg;
  cfg.beta0 = beta0_for_beta1(
      options.beta_mult * 2.0 * std::log(n) / (lambda_eff * lambda_eff * n), cfg.gamma, cfg.L);

  UnbalancedWbAdapter adapter(inst, penalty, options.gamma_reg);
  const auto run =
      options.linesearch
          ? run_linesearch(cfg, adapter, adapter.initial_x(), adapter.initial_state())
          : run_constant_steps(cfg, adapter, adapter.initial_x(), adapter.initial_state());

  UnbalancedWbReport rep;
  rep.config = cfg;
  rep.plans = adapter.plans_of(run.best_y);
  const Vector nu_iter = adapter.nu_of(run.best_y);
  const Vector nu_best = adapter.best_nu(rep.plans);
  rep.barycenter = adapter.primal_objective(rep.plans, nu_best) <
                           adapter.primal_objective(rep.plans, nu_iter)
                       ? nu_best
                       : nu_iter;
  for (Index l = 0; l < inst.m; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    rep.value += inst.weights[l] *
                 (dot(inst.cost(l).raw(), rep.plans[ls]) +
                  penalty.value(rep.barycenter - rep.plans[ls].colwise().sum().transpose()));
  }
  if (options.normalize_barycenter && rep.barycenter.sum() > 0.0) {
    rep.barycenter /= rep.barycenter.sum();
  }
  rep.v = adapter.blocks(run.best_x);
  rep.gap = run.best.rounded;
  rep.converged = run.converged;
  rep.iterations = run.iterations;
  rep.inner_total = run.inner_total;
  rep.trace = run.trace;
  rep.steps = run.steps;
  return rep;
}

}  // namespace otwb
