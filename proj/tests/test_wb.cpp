#include "otwb/error.hpp"
#include "otwb/oracle.hpp"
#include "otwb/wb_solver.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace otwb;
using namespace otwb::testing;

namespace {

Matrix line_cost(Index n) {
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) c(i, j) = std::abs(static_cast<double>(i - j)) / static_cast<double>(n - 1);
  }
  return c;
}

WbInstance random_wb(SplitMix64& rng, Index m, Index n) {
  std::vector<Histogram> marg;
  for (Index l = 0; l < m; ++l) marg.push_back(Histogram::normalized(random_weights(rng, n, 0.05, 1)));
  return WbInstance::make(Histogram::normalized(random_weights(rng, m, 0.2, 1)).values(), marg,
                          {random_matrix(rng, n, n, 0, 1)});
}

}  // namespace

TEST_SUITE("wb") {
  TEST_CASE("closure keeps the weighted dual sum at zero") {
    SplitMix64 rng(61);
    for (int t = 0; t < 20; ++t) {
      const Index m = 2 + static_cast<Index>(rng.below(4));
      const Vector w = random_histogram(rng, m);
      std::vector<Vector> head;
      for (Index l = 0; l + 1 < m; ++l) head.push_back(random_weights(rng, 5, -1, 1));
      const Vector last = wb_closure(head, w);
      Vector total = w[m - 1] * last;
      for (Index l = 0; l + 1 < m; ++l) total += w[l] * head[static_cast<std::size_t>(l)];
      CHECK(total.cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("adapter duals satisfy the closure after every step") {
    SplitMix64 rng(62);
    const WbInstance inst = random_wb(rng, 3, 6);
    WbAdapter adapter(inst, false, 0.0);
    WbPlans y = adapter.initial_plans();
    Vector x = adapter.initial_x();
    for (int k = 0; k < 20; ++k) {
      y = adapter.dual_prox(y, x, 0.5);
      x = adapter.primal_prox(x, y, 0.5);
      const WbDual d = adapter.split(x);
      Vector total = Vector::Zero(inst.n);
      for (Index l = 0; l < inst.m; ++l) total += inst.weights[l] * d.v[static_cast<std::size_t>(l)];
      CHECK(total.cwiseAbs().maxCoeff() < 1e-10);
      for (Index l = 0; l < inst.m; ++l) {
        CHECK(d.u[static_cast<std::size_t>(l)].cwiseAbs().maxCoeff() <= inst.lambda + 1e-15);
      }
    }
    CHECK((adapter.primal_prox(x, y, 0.0) - x).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("gap of zero duals and uniform plans is the primal term") {
    SplitMix64 rng(63);
    const WbInstance inst = random_wb(rng, 3, 5);
    const double n = 5.0;
    const std::vector<Matrix> plans(3, Matrix::Constant(5, 5, 1.0 / (n * n)));
    WbDual dual;
    for (Index l = 0; l < 3; ++l) {
      dual.u.push_back(Vector::Zero(5));
      dual.v.push_back(Vector::Zero(5));
    }
    double expect = 0.0;
    for (Index l = 0; l < 3; ++l) {
      const auto ls = static_cast<std::size_t>(l);
      expect += inst.weights[l] *
                ((inst.cost(l).entries().array() * plans[ls].array()).sum() +
                 inst.lambda * (inst.marginals[ls].values().array() - 1.0 / n).abs().sum());
    }
    CHECK(wb_gap(plans, dual, inst) == doctest::Approx(expect).epsilon(1e-14));
  }

  TEST_CASE("identical marginals give that marginal as barycenter") {
    SplitMix64 rng(64);
    const Index n = 8;
    const Histogram mu = Histogram::normalized(random_weights(rng, n, 0.05, 1));
    Vector w(2);
    w << 0.5, 0.5;
    const WbInstance inst = WbInstance::make(w, {mu, mu}, {line_cost(n)});
    const WbSolution sol = solve_wb(inst, 0.01);
    CHECK(sol.converged);
    CHECK(sol.gap_certificate <= 0.01);
    CHECK(tv_distance(sol.barycenter, mu.values()) <= 0.05);
    CHECK(sol.value <= 0.01 + 1e-12);

    // Gap trend: window minima do not grow.
    double previous = std::numeric_limits<double>::infinity();
    const std::size_t window = std::max<std::size_t>(1, sol.trace.size() / 5);
    for (std::size_t start = 0; start + window <= sol.trace.size(); start += window) {
      double lo = std::numeric_limits<double>::infinity();
      for (std::size_t k = start; k < start + window; ++k) lo = std::min(lo, sol.trace[k].gap_rounded);
      CHECK(lo <= previous + 1e-12);
      previous = lo;
    }
  }

  TEST_CASE("solver output is feasible and certified against the oracle") {
    SplitMix64 rng(65);
    const WbInstance inst = random_wb(rng, 2, 4);
    const ExactWbSolution ex = solve_exact_wb(inst);
    const WbSolution sol = solve_wb(inst, 0.01);
    CHECK(sol.converged);
    double raw_opt = ex.value + inst.offset();
    CHECK(sol.value >= raw_opt - 1e-9);
    CHECK(sol.value - raw_opt <= sol.gap_certificate + 1e-9);
    for (Index l = 0; l < inst.m; ++l) {
      const Matrix& y = sol.plans_rounded[static_cast<std::size_t>(l)];
      CHECK((y.rowwise().sum() - inst.marginals[static_cast<std::size_t>(l)].values()).cwiseAbs().maxCoeff() <
            1e-12);
      CHECK((y.colwise().sum().transpose() - sol.barycenter).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("plan passes grow linearly in m") {
    SplitMix64 rng(66);
    WbOptions opt;
    opt.linesearch = false;
    opt.max_outer = 20;
    for (Index m : {2, 4, 6}) {
      const WbInstance inst = random_wb(rng, m, 5);
      const WbSolution sol = solve_wb(inst, 1e-12, opt);
      CHECK(sol.iterations == 20);
      CHECK(sol.plan_passes == 20 * m);
    }
  }

  TEST_CASE("coupling norm") {
    SplitMix64 rng(67);
    const WbInstance inst = random_wb(rng, 3, 4);
    const double wm = inst.weights[2];
    CHECK(wb_coupling_norm(inst, false) == doctest::Approx(std::sqrt(1.0 + 1.0 / wm)));
    CHECK(wb_coupling_norm(inst, true) == doctest::Approx(1.0 / std::sqrt(wm)));
  }

  TEST_CASE("degenerate weights are rejected") {
    const Histogram h = Histogram::normalized(Vector::Ones(3));
    Vector w(2);
    w << 1.0, 0.0;
    CHECK_THROWS_AS(WbInstance::make(w, {h, h}, {Matrix::Zero(3, 3)}), InvalidInstance);
    w << 0.5, 0.5;
    const WbInstance ok = WbInstance::make(w, {h, h}, {line_cost(3)});
    CHECK_THROWS_AS(solve_wb(ok, 0.0), UsageError);
  }
}
