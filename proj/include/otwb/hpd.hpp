#pragma once

// Generic hybrid primal-dual engine with linesearch and ergodic averaging.
//
// The engine minimizes over x (a Euclidean vector with a simple prox) and
// maximizes over y (a Bregman variable). A problem adapter supplies:
//
//   using Dual = ...;
//   Dual   dual_prox(const Dual& y, const Vector& xbar, double sigma);
//   Vector primal_prox(const Vector& x, const Dual& y_new, double tau);
//   double primal_sqnorm(const Vector& dx);
//   double dual_divergence(const Dual& y1, const Dual& y0);
//   double coupling(const Vector& dx, const Dual& y1, const Dual& y0);  // ⟨K dx, y1 - y0⟩
//   Vector flatten(const Dual& y);
//   GapReport gap(const Vector& x, const Vector& y_flat);

#include "otwb/error.hpp"
#include "otwb/instances.hpp"
#include "otwb/trace.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace otwb {

struct GapReport {
  double raw = std::numeric_limits<double>::infinity();
  double rounded = std::numeric_limits<double>::infinity();
  double primal_value = std::numeric_limits<double>::quiet_NaN();
};

enum class CandidatePolicy { ergodic, last, both };

struct EngineConfig {
  double rho = 0.99;
  double beta0 = 1.0;
  double gamma = 0.0;   // relative strong convexity of the y-side function
  double L = 1.0;       // norm of the coupling operator
  double theta0 = 0.0;  // <= 0 selects γ√β₀/L when γ > 0, else 1
  double eps = 1e-2;
  long max_outer = 10000;
  int max_inner = 5000;
  long gap_every = 1;
  CandidatePolicy candidates = CandidatePolicy::both;
  bool general_average = true;  // include the τ₁θ₁x⁰ term in x̂
  bool keep_steps = true;
};

/// β₀ such that one step of β ← β/(1 + γβτ) with τ = 1/(√β L) lands on beta1.
inline double beta0_for_beta1(double beta1, double gamma, double L) {
  if (gamma <= 0.0) return beta1;
  const double a = beta1 * gamma / L;
  const double r = 0.5 * (a + std::sqrt(a * a + 4.0 * beta1));
  return r * r;
}

struct StepRecord {
  long k = 0;
  double tau = 0.0;
  double sigma = 0.0;
  double theta = 0.0;
  double beta = 0.0;
  int rejections = 0;
  double T = 0.0;
  double primal_term = 0.0;    // ½‖x⁺ - x̄‖²
  double dual_term = 0.0;      // D(y⁺, y)/β
  double coupling_term = 0.0;  // τ⟨K(x⁺ - x̄), y⁺ - y⟩
};

enum class CandidateSource { none, ergodic, last };

template <class Dual>
struct RunResult {
  Vector x_last;
  Dual y_last;
  Vector x_avg;
  Vector y_avg;
  double T = 0.0;
  long iterations = 0;
  long inner_total = 0;
  bool converged = false;

  GapReport best;
  CandidateSource best_source = CandidateSource::none;
  Vector best_x;
  Vector best_y;

  std::vector<StepRecord> steps;
  std::vector<TraceRow> trace;
  long invariant_violations = 0;

  double tau0 = 0.0;
  double theta0 = 0.0;
  double beta0 = 0.0;
  double tau1_theta1 = 0.0;
};

/// Cumulative rejections Σ_{j≤k} i_j allowed after k outer steps.
inline double linesearch_budget(long k, double rho, double theta0) {
  const double theta_bar = std::max((1.0 + std::sqrt(5.0)) / 2.0, theta0);
  return static_cast<double>(k + 1) * (1.0 + std::log(theta_bar) / std::abs(std::log(rho)));
}

inline bool assert_linesearch_budget(const std::vector<StepRecord>& steps, double rho,
                                     double theta0) {
  long total = 0;
  for (const auto& s : steps) {
    total += s.rejections;
    if (static_cast<double>(total) > linesearch_budget(s.k, rho, theta0)) return false;
  }
  return true;
}

namespace detail {

inline bool accept_step(double a, double b, double c) {
  return a + b + c >= -1e-12 * (std::abs(a) + std::abs(b) + std::abs(c));
}

template <class Adapter, class Dual = typename Adapter::Dual>
class Bookkeeper {
 public:
  Bookkeeper(const EngineConfig& cfg, Adapter& adapter, RunResult<Dual>& out)
      : cfg_(cfg), adapter_(adapter), out_(out), start_(std::chrono::steady_clock::now()) {}

  // Returns true when the certificate reached eps.
  bool evaluate(long k, const StepRecord& step, bool have_average, const Vector& x_avg,
                const Vector& y_avg, const Vector& x_last, const Dual& y_last) {
    GapReport chosen;
    auto consider = [&](const Vector& x, const Vector& y, CandidateSource src) {
      const GapReport r = adapter_.gap(x, y);
      if (r.rounded < chosen.rounded || !std::isfinite(chosen.rounded)) chosen = r;
      if (r.rounded < out_.best.rounded || out_.best_source == CandidateSource::none) {
        out_.best = r;
        out_.best_source = src;
        out_.best_x = x;
        out_.best_y = y;
      }
    };
    const bool use_avg = have_average && cfg_.candidates != CandidatePolicy::last;
    const bool use_last = !have_average || cfg_.candidates != CandidatePolicy::ergodic;
    if (use_avg) consider(x_avg, y_avg, CandidateSource::ergodic);
    if (use_last) consider(x_last, adapter_.flatten(y_last), CandidateSource::last);

    TraceRow row;
    row.iter = k;
    row.tau = step.tau;
    row.sigma = step.sigma;
    row.beta = step.beta;
    row.theta = step.theta;
    row.inner_iters = out_.inner_total;
    row.gap_raw = chosen.raw;
    row.gap_rounded = chosen.rounded;
    row.primal_value = chosen.primal_value;
    row.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    out_.trace.push_back(row);
    return out_.best.rounded <= cfg_.eps;
  }

 private:
  const EngineConfig& cfg_;
  Adapter& adapter_;
  RunResult<Dual>& out_;
  std::chrono::steady_clock::time_point start_;
};

inline void require_finite(double a, double b, double c, long k, double tau) {
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) {
    std::ostringstream os;
    os << "non-finite iterate at outer step " << k << " (tau=" << tau << ")";
    throw NumericalFailure(os.str());
  }
}

inline void validate(const EngineConfig& cfg) {
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw UsageError("rho must lie in (0, 1)");
  if (!(cfg.beta0 > 0.0) || !std::isfinite(cfg.beta0)) throw UsageError("beta0 must be positive");
  if (!(cfg.L > 0.0)) throw UsageError("L must be positive");
  if (cfg.gamma < 0.0) throw UsageError("gamma must be nonnegative");
  if (!(cfg.eps > 0.0)) throw UsageError("eps must be positive");
  if (cfg.max_outer < 0) throw UsageError("max_outer must be nonnegative");
}

}  // namespace detail

/// Linesearch variant: outer step updates τ and β, inner loop shrinks τ by ρ
/// until the stability inequality holds.
template <class Adapter>
RunResult<typename Adapter::Dual> run_linesearch(const EngineConfig& cfg, Adapter& adapter,
                                                 const Vector& x0,
                                                 const typename Adapter::Dual& y1) {
  using Dual = typename Adapter::Dual;
  detail::validate(cfg);
  if (cfg.gamma > 0.0 && cfg.gamma > cfg.L / cfg.rho) {
    throw UsageError("strong convexity gamma must not exceed L/rho");
  }
  RunResult<Dual> out;
  detail::Bookkeeper<Adapter> book(cfg, adapter, out);

  const double beta0 = cfg.beta0;
  const double tau0 = 1.0 / (std::sqrt(beta0) * cfg.L);
  const double theta0 =
      cfg.theta0 > 0.0 ? cfg.theta0 : (cfg.gamma > 0.0 ? cfg.gamma * std::sqrt(beta0) / cfg.L : 1.0);
  out.tau0 = tau0;
  out.theta0 = theta0;
  out.beta0 = beta0;

  Vector x_prev = x0, x = x0;
  Dual y = y1;
  double tau_prev = tau0, theta_prev = theta0, beta_prev = beta0;
  double T = 0.0, w0 = 0.0;
  Vector x_sum = Vector::Zero(x0.size());
  Vector y_sum;
  const long every = std::max<long>(1, cfg.gap_every);

  StepRecord step;
  step.tau = tau0;
  step.theta = theta0;
  step.beta = beta0;
  step.sigma = beta0 * tau0;
  bool done = book.evaluate(0, step, false, x, Vector(), x, y);

  for (long k = 1; k <= cfg.max_outer && !done; ++k) {
    double tau = tau_prev * std::sqrt(1.0 + theta_prev) / cfg.rho;
    const double beta = beta_prev / (1.0 + cfg.gamma * beta_prev * tau_prev);
    double theta = 0.0, sigma = 0.0, a = 0.0, b = 0.0, c = 0.0;
    Vector xbar, x_new;
    Dual y_new;
    int rejections = -1;
    while (true) {
      ++rejections;
      if (rejections > cfg.max_inner) {
        std::ostringstream os;
        os << "linesearch did not terminate after " << cfg.max_inner << " reductions at step "
           << k << " (tau=" << tau << ", beta=" << beta << ")";
        throw LinesearchStall(os.str(), tau, beta, k);
      }
      tau *= cfg.rho;
      theta = tau / tau_prev;
      sigma = beta * tau;
      xbar = x + theta * (x - x_prev);
      y_new = adapter.dual_prox(y, xbar, sigma);
      x_new = adapter.primal_prox(x, y_new, tau);
      const Vector dx = x_new - xbar;
      a = 0.5 * adapter.primal_sqnorm(dx);
      b = adapter.dual_divergence(y_new, y) / beta;
      c = tau * adapter.coupling(dx, y_new, y);
      detail::require_finite(a, b, c, k, tau);
      if (detail::accept_step(a, b, c)) break;
    }

    if (k == 1) {
      out.tau1_theta1 = tau * theta;
      w0 = cfg.general_average ? tau * theta : 0.0;
    }
    T += tau;
    x_sum += tau * xbar;
    const Vector y_flat = adapter.flatten(y_new);
    if (y_sum.size() == 0) y_sum = Vector::Zero(y_flat.size());
    y_sum += tau * y_flat;
    out.inner_total += rejections;
    if (tau < cfg.rho / (std::sqrt(beta) * cfg.L) * (1.0 - 1e-12)) ++out.invariant_violations;

    step = StepRecord{k, tau, sigma, theta, beta, rejections, T, a, b, c};
    if (cfg.keep_steps) out.steps.push_back(step);

    x_prev = std::move(x);
    x = std::move(x_new);
    y = std::move(y_new);
    tau_prev = tau;
    theta_prev = theta;
    beta_prev = beta;
    out.iterations = k;

    if (k % every == 0 || k == cfg.max_outer) {
      out.x_avg = (w0 * x0 + x_sum) / (w0 + T);
      out.y_avg = y_sum / T;
      done = book.evaluate(k, step, true, out.x_avg, out.y_avg, x, y);
    }
  }

  if (out.iterations > 0) {
    out.x_avg = (w0 * x0 + x_sum) / (w0 + T);
    out.y_avg = y_sum / T;
  }
  out.T = T;
  out.x_last = std::move(x);
  out.y_last = std::move(y);
  out.converged = out.best.rounded <= cfg.eps;
  return out;
}

/// Fixed steps without linesearch. For γ = 0: θ ≡ 1, τσL² = 1 and uniform
/// averages of the iterates. For γ > 0 the y-side acceleration
/// σ ← σ/√(1+γσ), τ ← τ√(1+γσ), θ = √(1+γσ) with τ-weighted averages.
template <class Adapter>
RunResult<typename Adapter::Dual> run_constant_steps(const EngineConfig& cfg, Adapter& adapter,
                                                     const Vector& x0,
                                                     const typename Adapter::Dual& y1) {
  using Dual = typename Adapter::Dual;
  detail::validate(cfg);
  RunResult<Dual> out;
  detail::Bookkeeper<Adapter> book(cfg, adapter, out);

  double tau = 1.0 / (std::sqrt(cfg.beta0) * cfg.L);
  double sigma = cfg.beta0 * tau;
  double theta = 1.0;
  out.tau0 = tau;
  out.theta0 = theta;
  out.beta0 = cfg.beta0;
  const bool accelerated = cfg.gamma > 0.0;

  Vector x_prev = x0, x = x0;
  Dual y = y1;
  double T = 0.0, w0 = 0.0;
  Vector x_sum = Vector::Zero(x0.size());
  Vector y_sum;
  const long every = std::max<long>(1, cfg.gap_every);

  StepRecord step{0, tau, sigma, theta, cfg.beta0, 0, 0.0, 0.0, 0.0, 0.0};
  bool done = book.evaluate(0, step, false, x, Vector(), x, y);

  auto averages = [&] {
    if (accelerated) {
      out.x_avg = (w0 * x0 + x_sum) / (w0 + T);
      out.y_avg = y_sum / T;
    } else {
      out.x_avg = x_sum / static_cast<double>(out.iterations);
      out.y_avg = y_sum / static_cast<double>(out.iterations);
    }
  };

  for (long k = 1; k <= cfg.max_outer && !done; ++k) {
    const Vector xbar = x + theta * (x - x_prev);
    Dual y_new = adapter.dual_prox(y, xbar, sigma);
    Vector x_new = adapter.primal_prox(x, y_new, tau);
    const Vector dx = x_new - xbar;
    const double a = 0.5 * adapter.primal_sqnorm(dx);
    const double b = adapter.dual_divergence(y_new, y) * tau / sigma;
    const double c = tau * adapter.coupling(dx, y_new, y);
    detail::require_finite(a, b, c, k, tau);

    const Vector y_flat = adapter.flatten(y_new);
    if (y_sum.size() == 0) y_sum = Vector::Zero(y_flat.size());
    if (accelerated) {
      if (k == 1) w0 = cfg.general_average ? tau * theta : 0.0;
      x_sum += tau * xbar;
      y_sum += tau * y_flat;
    } else {
      x_sum += x_new;
      y_sum += y_flat;
    }
    T += tau;
    step = StepRecord{k, tau, sigma, theta, sigma / tau, 0, T, a, b, c};
    if (cfg.keep_steps) out.steps.push_back(step);

    x_prev = std::move(x);
    x = std::move(x_new);
    y = std::move(y_new);
    out.iterations = k;

    if (accelerated) {
      const double grow = std::sqrt(1.0 + cfg.gamma * sigma);
      theta = grow;
      tau *= grow;
      sigma /= grow;
    }

    if (k % every == 0 || k == cfg.max_outer) {
      averages();
      done = book.evaluate(k, step, true, out.x_avg, out.y_avg, x, y);
    }
  }
  if (out.iterations > 0) averages();
  out.T = T;
  out.x_last = std::move(x);
  out.y_last = std::move(y);
  out.converged = out.best.rounded <= cfg.eps;
  return out;
}

}  // namespace otwb
