#include "otwb/error.hpp"
#include "otwb/instances.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace otwb;
using namespace otwb::testing;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("otwb_test_" + name);
}

bool same_instance(const OtInstance& a, const OtInstance& b) {
  return a.n == b.n && a.mu == b.mu && a.nu == b.nu && a.cost.raw() == b.cost.raw() &&
         a.cost.entries() == b.cost.entries() && a.lambda == b.lambda;
}

}  // namespace

TEST_SUITE("instances") {
  TEST_CASE("normalize_cost keeps an already normalized matrix") {
    Matrix raw(2, 2);
    raw << 0, 1, 1, 0;
    const CostMatrix c = normalize_cost(raw);
    CHECK(c.entries() == raw);
    CHECK(c.offset(Vector::Constant(2, 0.5), Vector::Constant(2, 0.5)) == 0.0);
  }

  TEST_CASE("normalize_cost removes a uniform shift") {
    Matrix raw(2, 2);
    raw << 2, 3, 3, 2;
    const CostMatrix c = normalize_cost(raw);
    Matrix expect(2, 2);
    expect << 0, 1, 1, 0;
    CHECK(c.entries() == expect);
    CHECK(c.offset(Vector::Constant(2, 0.5), Vector::Constant(2, 0.5)) == doctest::Approx(2.0));
  }

  TEST_CASE("cost offset is constant over plans with fixed marginals") {
    Matrix raw(2, 2);
    raw << 1, 2, 4, 3;
    const CostMatrix c = normalize_cost(raw);
    Matrix expect(2, 2);
    expect << 0, 1, 1, 0;
    CHECK(c.entries() == expect);
    SplitMix64 rng(3);
    const Vector mu = random_histogram(rng, 2), nu = random_histogram(rng, 2);
    const double off = c.offset(mu, nu);
    for (int t = 0; t < 100; ++t) {
      // Plans with marginals (mu, nu) form a segment in the 2x2 case.
      const double lo = std::max(0.0, mu[0] - nu[1]), hi = std::min(mu[0], nu[0]);
      const double a = lo + (hi - lo) * rng.uniform();
      Matrix x(2, 2);
      x << a, mu[0] - a, nu[0] - a, mu[1] - nu[0] + a;
      const double diff = (raw.array() * x.array()).sum() - (c.entries().array() * x.array()).sum();
      CHECK(diff == doctest::Approx(off).epsilon(1e-12));
    }
  }

  TEST_CASE("normalize_cost is idempotent and zeroes every row and column minimum") {
    SplitMix64 rng(5);
    const Matrix raw = random_matrix(rng, 7, 7, 0.0, 3.0);
    const CostMatrix once = normalize_cost(raw);
    const CostMatrix twice = normalize_cost(once.entries());
    CHECK(twice.entries() == once.entries());
    CHECK(once.entries().rowwise().minCoeff().maxCoeff() == 0.0);
    CHECK(once.entries().colwise().minCoeff().maxCoeff() == 0.0);
    CHECK(once.entries().minCoeff() >= 0.0);
  }

  TEST_CASE("normalize_cost rejects bad input") {
    CHECK_THROWS_AS(normalize_cost(Matrix::Zero(2, 3)), InvalidInstance);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(normalize_cost(bad), InvalidInstance);
  }

  TEST_CASE("gaussian instance on two points") {
    const OtInstance inst = gen_gaussian_instance(2);
    Matrix expect(2, 2);
    expect << 0, 10, 10, 0;
    CHECK(inst.cost.raw().isApprox(expect));
    CHECK(inst.mu.values().sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(inst.nu.values().sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(gen_gaussian_instance(1), InvalidInstance);
  }

  TEST_CASE("gaussian instance at n = 100 is bimodal near 3 and 7") {
    const OtInstance inst = gen_gaussian_instance(100);
    const Vector grid = uniform_grid(0.0, 10.0, 100);
    const Vector& mu = inst.mu.values();
    Index left = 0, right = 50;
    mu.head(50).maxCoeff(&left);
    mu.tail(50).maxCoeff(&right);
    right += 50;
    CHECK(std::abs(grid[left] - 3.0) < 0.1);
    CHECK(std::abs(grid[right] - 7.0) < 0.1);
    CHECK(inst.lambda == doctest::Approx(inst.cost.max_entry() / 2.0));
  }

  TEST_CASE("random instance is deterministic and bounded") {
    const OtInstance a = gen_random_instance(100, 7), b = gen_random_instance(100, 7);
    CHECK(same_instance(a, b));
    CHECK(a.cost.raw().minCoeff() >= 0.0);
    CHECK(a.cost.raw().maxCoeff() <= 1.0);
    CHECK(a.cost.entries().rowwise().minCoeff().maxCoeff() == 0.0);
    CHECK(a.cost.entries().colwise().minCoeff().maxCoeff() == 0.0);
    CHECK_FALSE(same_instance(a, gen_random_instance(100, 8)));
  }

  TEST_CASE("corner to dense instance") {
    const OtInstance small = gen_corner_to_dense(2);
    CHECK(small.n == 4);
    CHECK((small.nu.values().array() == 0.25).all());
    CHECK(small.cost.raw()(0, 3) == doctest::Approx(std::sqrt(2.0)));

    const OtInstance big = gen_corner_to_dense(10);
    CHECK(big.n == 100);
    double quadrant = 0.0;
    for (Index r = 0; r < 5; ++r) {
      for (Index c = 0; c < 5; ++c) quadrant += big.mu[r * 10 + c];
    }
    CHECK(quadrant > 0.9);
  }

  TEST_CASE("gaussian barycenter case") {
    const GaussianWbCase wb = gen_gaussian_wb(10, 100, 1);
    CHECK(wb.instance.m == 10);
    CHECK(wb.instance.n == 100);
    CHECK(wb.instance.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wb.instance.shared_cost());
    CHECK(wb.grid[0] == doctest::Approx(-10.0));
    CHECK(wb.grid[99] == doctest::Approx(10.0));
  }

  TEST_CASE("barycenter weights must be positive and sum to one") {
    SplitMix64 rng(1);
    const std::vector<Histogram> marg = {Histogram::normalized(random_weights(rng, 3, 0.1, 1.0)),
                                         Histogram::normalized(random_weights(rng, 3, 0.1, 1.0))};
    const std::vector<Matrix> cost = {random_matrix(rng, 3, 3, 0.0, 1.0)};
    Vector w(2);
    w << 1.0, 0.0;
    CHECK_THROWS_AS(WbInstance::make(w, marg, cost), InvalidInstance);
    w << 0.6, 0.6;
    CHECK_THROWS_AS(WbInstance::make(w, marg, cost), InvalidInstance);
    w << 0.5, 0.5;
    CHECK_NOTHROW(WbInstance::make(w, marg, cost));
  }

  TEST_CASE("histogram tolerance rules") {
    Vector v(3);
    v << 0.2, 0.3, 0.5000001;
    const Histogram h = Histogram::from_values(v);
    CHECK(h.values().sum() == doctest::Approx(1.0).epsilon(1e-14));
    v << 0.2, 0.3, 0.6;
    CHECK_THROWS_AS(Histogram::from_values(v), InvalidInstance);
    v << -0.1, 0.6, 0.5;
    CHECK_THROWS_AS(Histogram::from_values(v), InvalidInstance);
  }

  TEST_CASE("instance files round-trip exactly") {
    const auto path = temp_file("roundtrip.json");
    const OtInstance a = gen_random_instance(10, 7);
    save_instance(a, path);
    const AnyInstance back = load_instance(path);
    REQUIRE(std::holds_alternative<OtInstance>(back));
    CHECK(same_instance(a, std::get<OtInstance>(back)));

    const GaussianWbCase wb = gen_gaussian_wb(3, 12, 4);
    save_instance(wb.instance, path);
    const AnyInstance wb_back = load_instance(path);
    REQUIRE(std::holds_alternative<WbInstance>(wb_back));
    const WbInstance& w = std::get<WbInstance>(wb_back);
    CHECK(w.weights == wb.instance.weights);
    CHECK(w.shared_cost());
    for (Index l = 0; l < 3; ++l) {
      CHECK(w.marginals[static_cast<std::size_t>(l)] == wb.instance.marginals[static_cast<std::size_t>(l)]);
      CHECK(w.cost(l).raw() == wb.instance.cost(l).raw());
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("instance file validation") {
    CHECK_THROWS_AS(instance_from_json(R"({"kind":"ot","n":2,"mu":[-0.5,1.5],"nu":[0.5,0.5],"cost":[[0,1],[1,0]]})"),
                    InvalidInstance);
    const AnyInstance ok = instance_from_json(
        R"({"kind":"ot","n":2,"mu":[0.5,0.5000001],"nu":[0.5,0.5],"cost":[[0,1],[1,0]]})");
    CHECK(std::get<OtInstance>(ok).mu.values().sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(instance_from_json(R"({"kind":"ot","n":2,"mu":[0.5,0.5],"nu":[0.5,0.5]})"),
                    ParseError);
    CHECK_THROWS_AS(instance_from_json(R"({"kind":"ot", "n":2,)"), ParseError);
    try {
      instance_from_json("{\n\"kind\": \"ot\",\n\"n\": 2 x\n}");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }

  TEST_CASE("image loader reads PGM and CSV") {
    const auto pgm = temp_file("img.pgm");
    {
      std::ofstream f(pgm);
      f << "P2\n# comment\n2 2\n255\n0 255\n128 64\n";
    }
    const Matrix a = load_image(pgm);
    CHECK(a.rows() == 2);
    CHECK(a(0, 1) == 255.0);
    CHECK(a(1, 1) == 64.0);
    const auto csv = temp_file("img.csv");
    {
      std::ofstream f(csv);
      f << "1,2\n3,4\n";
    }
    const Matrix b = load_image(csv);
    CHECK(b(1, 0) == 3.0);
    const Histogram h = image_histogram(b);
    CHECK(h[3] == doctest::Approx(0.4));
    std::filesystem::remove(pgm);
    std::filesystem::remove(csv);
    CHECK_THROWS(load_image(temp_file("missing.pgm")));
  }
}
