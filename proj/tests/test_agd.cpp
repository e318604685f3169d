#include "otwb/agd_baseline.hpp"
#include "otwb/oracle.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace otwb;
using namespace otwb::testing;

namespace {

OtInstance random_small(SplitMix64& rng, Index n) {
  return OtInstance::make(Histogram::normalized(random_weights(rng, n, 0.05, 1)),
                          Histogram::normalized(random_weights(rng, n, 0.05, 1)),
                          random_matrix(rng, n, n, 0, 1));
}

}  // namespace

TEST_SUITE("agd") {
  TEST_CASE("zero duals and constant cost give the uniform plan") {
    SplitMix64 rng(81);
    const Index n = 6;
    const OtInstance inst =
        OtInstance::make(Histogram::normalized(random_weights(rng, n, 0.05, 1)),
                         Histogram::normalized(random_weights(rng, n, 0.05, 1)), Matrix::Constant(n, n, 3.0));
    const double delta = 0.1;
    const PhiEval e = phi_and_grad(Vector::Zero(n), Vector::Zero(n), inst, 0.5, delta);
    CHECK((e.plan.entries.array() - 1.0 / 36.0).abs().maxCoeff() < 1e-15);
    const Vector mu_delta = ((1 - delta) * inst.mu.values().array() + delta / 6.0).matrix();
    CHECK((e.grad_u - (mu_delta - Vector::Constant(n, 1.0 / 6.0))).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("small delta recovers the entropic Gibbs plan") {
    SplitMix64 rng(82);
    const OtInstance inst = random_small(rng, 7);
    const Vector u = random_weights(rng, 7, -0.3, 0.3), v = random_weights(rng, 7, -0.3, 0.3);
    const double gamma = 0.1;
    const PhiEval e = phi_and_grad(u, v, inst, gamma, 1e-8);
    Matrix gibbs = ((apply_K(u, v) - inst.cost.entries()) / gamma).array().exp().matrix();
    gibbs /= gibbs.sum();
    CHECK((e.plan.entries - gibbs).cwiseAbs().maxCoeff() <= 1e-6);
  }

  TEST_CASE("gradient matches central differences") {
    SplitMix64 rng(83);
    const Index n = 5;
    const OtInstance inst = random_small(rng, n);
    const double gamma = 0.2, delta = 0.05, h = 1e-6;
    for (int t = 0; t < 5; ++t) {
      const Vector u = random_weights(rng, n, -0.5, 0.5), v = random_weights(rng, n, -0.5, 0.5);
      const PhiEval e = phi_and_grad(u, v, inst, gamma, delta);
      CHECK(e.value == doctest::Approx(phi_from_plan(u, v, e.plan.entries, inst, gamma, delta))
                           .epsilon(1e-10));
      CHECK(e.plan.entries.minCoeff() >= e.plan.floor() * (1 - 1e-15));
      CHECK(std::abs(e.plan.entries.sum() - 1.0) < 1e-10);
      for (Index i = 0; i < n; ++i) {
        Vector up = u, um = u, vp = v, vm = v;
        up[i] += h;
        um[i] -= h;
        vp[i] += h;
        vm[i] -= h;
        const double gu = (phi_and_grad(up, v, inst, gamma, delta).value -
                           phi_and_grad(um, v, inst, gamma, delta).value) / (2 * h);
        const double gv = (phi_and_grad(u, vp, inst, gamma, delta).value -
                           phi_and_grad(u, vm, inst, gamma, delta).value) / (2 * h);
        CHECK(std::abs(gu - e.grad_u[i]) <= 1e-5);
        CHECK(std::abs(gv - e.grad_v[i]) <= 1e-5);
      }
    }
  }

  TEST_CASE("large duals do not overflow") {
    SplitMix64 rng(84);
    const OtInstance inst = random_small(rng, 4);
    const PhiEval e = phi_and_grad(Vector::Constant(4, 500.0), Vector::Zero(4), inst, 1e-3, 0.01);
    CHECK(std::isfinite(e.value));
    CHECK(e.plan.entries.allFinite());
  }

  TEST_CASE("accelerated ascent on random n = 50") {
    const OtInstance inst = gen_random_instance(50, 5);
    const AgdReport rep = solve_agd(inst, 0.05);
    CHECK(rep.converged);
    CHECK(rep.gap_certificate <= 0.05);
    const double opt = solve_exact_ot(inst).value;
    CHECK(rep.value - opt <= 0.05);
    CHECK(rep.value - opt <= rep.gap_certificate + 1e-12);
    CHECK(rep.value >= opt - 1e-12);
    CHECK(rep.gamma == doctest::Approx(0.05 / (4.0 * std::log(50.0))));
    CHECK((rep.plan_rounded.rowwise().sum() - inst.mu.values()).cwiseAbs().maxCoeff() < 1e-12);

    for (const auto& ev : rep.backtracking) {
      if (ev.L_after > ev.L_before) CHECK(ev.violation);
      if (ev.violation) CHECK(ev.L_after > ev.L_before);
    }
    for (std::size_t k = 1; k < rep.phi_history.size(); ++k) {
      CHECK(rep.phi_history[k] >= rep.phi_history[k - 1] - 1e-12 * std::abs(rep.phi_history[k - 1]));
    }
  }

  TEST_CASE("iteration cap reports not converged") {
    SplitMix64 rng(85);
    const OtInstance inst = random_small(rng, 10);
    AgdOptions opt;
    opt.max_iter = 2;
    const AgdReport rep = solve_agd(inst, 1e-6, opt);
    CHECK_FALSE(rep.converged);
    CHECK(rep.iterations == 2);
    CHECK(std::isfinite(rep.gap_certificate));
  }
}
