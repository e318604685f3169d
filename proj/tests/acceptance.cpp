// Acceptance runner: one PASS/FAIL line per criterion. Exits nonzero when a
// criterion fails that is not in the documented list.

#include "otwb/agd_baseline.hpp"
#include "otwb/hpd.hpp"
#include "otwb/kernels.hpp"
#include "otwb/oracle.hpp"
#include "otwb/ot_solver.hpp"
#include "otwb/wb_solver.hpp"
#include "support.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace otwb;
using namespace otwb::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Step logs collected from every solver run below, for the budget criterion.
struct BudgetLog {
  std::string name;
  std::vector<StepRecord> steps;
  double rho = 0.99;
  double theta0 = 1.0;
};
std::vector<BudgetLog> g_budget_logs;

double theta0_of(const EngineConfig& c) {
  if (c.theta0 > 0.0) return c.theta0;
  return c.gamma > 0.0 ? c.gamma * std::sqrt(c.beta0) / c.L : 1.0;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome round_contract() {
  SplitMix64 rng(101);
  Stopwatch clock;
  const Index sizes[] = {3, 10, 50};
  double worst_marginal = 0.0, worst_slack = -1e300;
  for (int t = 0; t < 1000; ++t) {
    const Index n = sizes[t % 3];
    const Matrix x = random_plan(rng, n, t % 7 == 0);
    const Vector mu = random_histogram(rng, n), nu = random_histogram(rng, n);
    const Matrix y = round_to_feasible(x, mu, nu);
    worst_marginal = std::max({worst_marginal, (y.rowwise().sum() - mu).lpNorm<Eigen::Infinity>(),
                               (y.colwise().sum().transpose() - nu).lpNorm<Eigen::Infinity>()});
    const double bound = (mu - x.rowwise().sum()).lpNorm<1>() +
                         (nu - x.colwise().sum().transpose()).lpNorm<1>();
    worst_slack = std::max(worst_slack, (x - y).lpNorm<1>() - bound);
  }
  const double secs = clock.seconds();
  return {worst_marginal <= 1e-12 && worst_slack <= 1e-12 && secs < 5.0,
          fmt("max marginal error %.2e", worst_marginal) + fmt(", max l1 excess %.2e", worst_slack) +
              fmt(", %.2fs", secs)};
}

Outcome dual_box_bound() {
  Stopwatch clock;
  SplitMix64 rng(202);
  double worst = -1e300;
  double worst_objective = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(9));
    const OtInstance inst = gen_random_instance(n, 5000 + t);
    const ExactSolution ex = solve_exact_ot(inst);
    const Matrix& c = inst.cost.entries();
    const OtDual d = shift_dual_to_box(ex.dual.u, ex.dual.v, c);
    const double sup = std::max(d.u.lpNorm<Eigen::Infinity>(), d.v.lpNorm<Eigen::Infinity>());
    worst = std::max(worst, sup - c.maxCoeff() / 2.0);
    const double obj = d.u.dot(inst.mu.values()) + d.v.dot(inst.nu.values());
    const double exact = (c.array() * ex.plan.array()).sum();
    worst_objective = std::max(worst_objective, std::abs(obj - exact));
  }
  const OtInstance adv = adversarial_instance(6);
  const ExactSolution ex = solve_exact_ot(adv);
  const OtDual d = shift_dual_to_box(ex.dual.u, ex.dual.v, adv.cost.entries());
  const double adv_sup = std::max(d.u.lpNorm<Eigen::Infinity>(), d.v.lpNorm<Eigen::Infinity>());
  const double half = adv.cost.max_entry() / 2.0;
  const double secs = clock.seconds();
  const bool ok = worst <= 1e-9 && worst_objective <= 1e-9 && adv_sup >= half - 1e-9 && secs < 10.0;
  return {ok, fmt("max excess over ||C||/2 %.2e", worst) +
                  fmt(", objective drift %.2e", worst_objective) +
                  fmt(", adversarial sup %.6f", adv_sup) + fmt(" vs %.6f", half) +
                  fmt(", %.2fs", secs)};
}

Outcome oracle_equivalence() {
  Stopwatch clock;
  SplitMix64 rng(303);
  double worst = 0.0;
  int unconverged = 0;
  for (int t = 0; t < 50; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(9));
    const OtInstance inst = gen_random_instance(n, 9000 + t);
    OtOptions opt;
    opt.keep_steps = true;
    const OtSolution s = solve_eps(inst, 1e-3, opt);
    if (!s.converged) ++unconverged;
    const double opt_value = solve_exact_ot(inst).value;
    worst = std::max(worst, std::abs(s.value - opt_value));
    g_budget_logs.push_back({"oracle-eq " + std::to_string(t), s.steps, opt.rho, theta0_of(s.config)});
  }
  const double secs = clock.seconds();
  return {worst <= 1e-3 && secs < 60.0,
          fmt("max |value - optimum| %.2e", worst) + fmt(", unconverged %.0f", unconverged) +
              fmt(", %.2fs", secs)};
}

Outcome precision_anchor() {
  std::ostringstream detail;
  bool ok = true;
  const std::pair<const char*, OtInstance> cases[] = {
      {"random", gen_random_instance(100, 7)},
      {"gaussian", gen_gaussian_instance(100)},
  };
  for (const auto& [name, inst] : cases) {
    OtOptions opt;
    opt.keep_steps = true;
    Stopwatch clock;
    const OtSolution s = solve_eps(inst, 0.01, opt);
    const double secs = clock.seconds();
    const double opt_value = solve_exact_ot(inst).value;
    const double err = std::abs(s.value - opt_value);
    ok = ok && err <= 0.01 && secs < 10.0;
    detail << name << ": |value - optimum| " << fmt("%.4g", err) << " in " << s.iterations
           << " iterations, " << fmt("%.2fs; ", secs);
    g_budget_logs.push_back({std::string("anchor ") + name, s.steps, opt.rho, theta0_of(s.config)});
  }
  return {ok, detail.str()};
}

Outcome schedule_rates() {
  const OtInstance inst = gen_random_instance(50, 11);
  const long N = 5000;
  std::ostringstream detail;
  bool ok = true;
  const double lambda = inst.lambda;
  const double n = 50.0;
  const double beta_plain = 2.0 * std::log(n) / (lambda * lambda * n);

  {  // γ = 0
    EngineConfig cfg;
    cfg.L = std::sqrt(2.0);
    cfg.beta0 = beta_plain;
    cfg.eps = 1e-300;
    cfg.max_outer = N;
    cfg.gap_every = N;
    OtAdapter adapter(inst, false, 0.0);
    const auto run = run_linesearch(cfg, adapter, adapter.initial_x(), adapter.initial_plan());
    long bad = 0;
    for (const auto& s : run.steps) {
      if (s.T < static_cast<double>(s.k) * cfg.rho * run.tau0 * (1.0 - 1e-10)) ++bad;
    }
    ok = ok && bad == 0 && static_cast<long>(run.steps.size()) == N;
    detail << "gamma=0: " << bad << " violations of T_N >= N rho tau0, T_N/(N tau0) = "
           << fmt("%.3f", run.T / (N * run.tau0));
    g_budget_logs.push_back({"schedule gamma=0", run.steps, cfg.rho, theta0_of(cfg)});
  }
  {  // γ > 0
    EngineConfig cfg;
    cfg.L = 1.0;
    cfg.gamma = 0.01 / (4.0 * std::log(n));
    cfg.beta0 = beta0_for_beta1(100.0 * beta_plain, cfg.gamma, cfg.L);
    cfg.eps = 1e-300;
    cfg.max_outer = N;
    cfg.gap_every = N;
    OtAdapter adapter(inst, true, cfg.gamma);
    const auto run = run_linesearch(cfg, adapter, adapter.initial_x(), adapter.initial_plan());
    const long n0 = 8;
    long bad = 0, first_hold = -1;
    const double c = cfg.gamma * cfg.rho * cfg.rho / (16.0 * cfg.L * cfg.L);
    for (const auto& s : run.steps) {
      const bool holds = s.T >= c * static_cast<double>(s.k) * static_cast<double>(s.k);
      if (s.k >= n0 && !holds) ++bad;
      if (holds && first_hold < 0) first_hold = s.k;
      if (!holds) first_hold = -1;
    }
    const bool first_immediate = !run.steps.empty() && run.steps.front().rejections == 0;
    ok = ok && bad == 0 && first_immediate && static_cast<long>(run.steps.size()) == N;
    detail << "; gamma>0: " << bad << " violations for N >= " << n0
           << " (bound holds from N = " << first_hold << "), T_N / bound = "
           << fmt("%.3g", run.T / (c * N * N))
           << (first_immediate ? ", first linesearch immediate" : ", first linesearch rejected");
    g_budget_logs.push_back({"schedule gamma>0", run.steps, cfg.rho, theta0_of(cfg)});
  }
  return {ok, detail.str()};
}

Outcome wb_anchor() {
  const GaussianWbCase wb = gen_gaussian_wb(10, 100, 42);
  WbOptions opt;
  opt.max_outer = 10000;
  opt.keep_steps = true;
  Stopwatch clock;
  const WbSolution s = solve_wb(wb.instance, 1e-3, opt);
  const double secs = clock.seconds();
  double mean = 0.0, sd = 0.0;
  for (std::size_t l = 0; l < wb.means.size(); ++l) {
    mean += wb.instance.weights[static_cast<Index>(l)] * wb.means[l];
    sd += wb.instance.weights[static_cast<Index>(l)] * wb.stddevs[l];
  }
  Vector target = gaussian_density(wb.grid, mean, sd);
  target /= target.sum();
  const double tv = tv_distance(s.barycenter, target);
  g_budget_logs.push_back({"wb gaussian", s.steps, opt.rho, theta0_of(s.config)});
  return {tv <= 0.05 && s.iterations <= 10000,
          fmt("TV %.4f", tv) + " after " + std::to_string(s.iterations) + " iterations" +
              fmt(", certificate %.2e", s.gap_certificate) + fmt(", %.1fs", secs)};
}

Outcome linesearch_budget_all() {
  long checked = 0, failed = 0;
  std::string first_fail;
  for (const auto& log : g_budget_logs) {
    if (log.steps.empty()) continue;
    ++checked;
    if (!assert_linesearch_budget(log.steps, log.rho, log.theta0)) {
      ++failed;
      if (first_fail.empty()) first_fail = log.name;
    }
  }
  return {checked > 0 && failed == 0,
          std::to_string(checked) + " runs checked, " + std::to_string(failed) + " over budget" +
              (first_fail.empty() ? "" : " (first: " + first_fail + ")")};
}

Outcome scaled_prox_criterion() {
  SplitMix64 rng(707);
  double worst_newton = 0.0, worst_picard = -1e300, worst_kkt = 0.0;
  int worst_iters = 0;
  for (int t = 0; t < 500; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(11));
    const double delta = rng.uniform(0.01, 0.9);
    const double spread = rng.uniform(0.0, 8.0);
    Matrix z(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) z(i, j) = std::exp(spread * (rng.uniform() - 1.0));
    }
    const double f = delta / static_cast<double>(n * n);
    const double s_star = bisect_scaled_root(z, f);
    const NewtonResult nr = scaled_root_newton(z, f);
    worst_newton = std::max(worst_newton, std::abs(nr.s - s_star) / s_star);
    worst_iters = std::max(worst_iters, nr.iterations);

    const PicardResult pr = scaled_root_picard(z, f, 1e-14, 200);
    const double e0 = std::abs(s_star - pr.history.front());
    for (std::size_t k = 0; k < pr.history.size(); ++k) {
      const double bound = std::pow(delta, static_cast<double>(k)) * e0;
      worst_picard =
          std::max(worst_picard, std::abs(pr.history[k] - s_star) - bound - 4e-16 * s_star);
    }

    const Matrix x = scaled_plan_from_root(z, nr.s, f);
    double kkt = std::abs(x.sum() - 1.0);
    kkt = std::max(kkt, f - x.minCoeff());
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        const double free = z(i, j) / nr.s;
        kkt = std::max(kkt, free > f ? std::abs(x(i, j) - free) : std::abs(x(i, j) - f));
      }
    }
    worst_kkt = std::max(worst_kkt, kkt);
  }
  return {worst_newton <= 1e-10 && worst_picard <= 0.0 && worst_kkt <= 1e-10,
          fmt("Newton vs bisection %.2e", worst_newton) +
              fmt(", Picard bound excess %.2e", worst_picard) + fmt(", KKT residual %.2e", worst_kkt) +
              ", max Newton iterations " + std::to_string(worst_iters)};
}

Outcome agd_gradient() {
  SplitMix64 rng(808);
  const double gamma = 0.1, delta = 0.1, h = 1e-6;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const OtInstance inst = gen_random_instance(5, 600 + t);
    const Vector u = random_weights(rng, 5, -0.5, 0.5), v = random_weights(rng, 5, -0.5, 0.5);
    const PhiEval p = phi_and_grad(u, v, inst, gamma, delta);
    for (Index i = 0; i < 5; ++i) {
      Vector up = u, um = u, vp = v, vm = v;
      up[i] += h;
      um[i] -= h;
      vp[i] += h;
      vm[i] -= h;
      const double du = (phi_and_grad(up, v, inst, gamma, delta).value -
                         phi_and_grad(um, v, inst, gamma, delta).value) / (2 * h);
      const double dv = (phi_and_grad(u, vp, inst, gamma, delta).value -
                         phi_and_grad(u, vm, inst, gamma, delta).value) / (2 * h);
      worst = std::max({worst, std::abs(du - p.grad_u[i]), std::abs(dv - p.grad_v[i])});
    }
  }
  return {worst <= 1e-5, fmt("max |finite difference - gradient| %.2e", worst)};
}

Outcome scaled_sparsity() {
  const OtInstance inst = gen_gaussian_instance(100);
  OtOptions opt;
  opt.mode = OtMode::scaled;
  opt.delta = 0.01;
  opt.keep_steps = true;
  Stopwatch clock;
  const OtSolution s = solve_eps(inst, 0.01, opt);
  const double secs = clock.seconds();
  g_budget_logs.push_back({"scaled gaussian", s.steps, opt.rho, theta0_of(s.config)});
  const ExactSolution ex = solve_exact_ot(inst);
  // Size of the optimal face: entries with zero reduced cost under an exact dual.
  const Matrix reduced = inst.cost.entries() - apply_K(ex.dual.u, ex.dual.v);
  const double face = static_cast<double>((reduced.array().abs() < 1e-9).count()) /
                      static_cast<double>(reduced.size());
  // Same settings on a random cost, where the optimum is unique.
  const OtSolution r = solve_eps(gen_random_instance(100, 7), 0.01, opt);
  return {s.support <= 0.05 && s.gap_certificate <= 0.01,
          fmt("support %.4f", s.support) + fmt(", certificate %.4g", s.gap_certificate) +
              fmt(", |value - optimum| %.4g", std::abs(s.value - ex.value)) + " after " +
              std::to_string(s.iterations) + " iterations" + fmt(", %.2fs", secs) +
              fmt("; zero-reduced-cost fraction %.3f", face) +
              fmt("; random n=100 support %.4f", r.support)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"round-contract", round_contract},
      {"dual-box-bound", dual_box_bound},
      {"oracle-equivalence", oracle_equivalence},
      {"precision-anchor", precision_anchor},
      {"schedule-rates", schedule_rates},
      {"scaled-prox", scaled_prox_criterion},
      {"agd-gradient", agd_gradient},
      {"wb-gaussian-anchor", wb_anchor},
      {"scaled-sparsity", scaled_sparsity},
      // Runs last so it sees the step logs of every solve above.
      {"linesearch-budget", linesearch_budget_all},
  };
  // Criteria recorded as not attained, with the measured numbers printed
  // alongside. They still print FAIL.
  const std::vector<std::string> documented = {"scaled-sparsity"};
  int failures = 0, documented_failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool known = std::find(documented.begin(), documented.end(), name) != documented.end();
    if (!o.pass) ++(known ? documented_failures : failures);
    std::printf("%s %s: %s%s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(),
                !o.pass && known ? " [documented as not attained]" : "");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed, %d documented as not attained, %d unexpected failures\n",
              static_cast<int>(criteria.size()) - failures - documented_failures, criteria.size(),
              documented_failures, failures);
  return failures == 0 ? 0 : 1;
}
