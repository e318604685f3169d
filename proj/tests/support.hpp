#pragma once

// Shared helpers for the unit tests and the acceptance runner.

#include "otwb/instances.hpp"
#include "otwb/rng.hpp"

#include <chrono>
#include <cmath>

namespace otwb::testing {

inline Vector random_weights(SplitMix64& rng, Index n, double lo = 0.0, double hi = 1.0) {
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = rng.uniform(lo, hi);
  return w;
}

inline Vector random_histogram(SplitMix64& rng, Index n) {
  Vector w = random_weights(rng, n, 0.01, 1.0);
  return w / w.sum();
}

// Random point of the simplex; with sparse = true about half the entries are zero.
inline Matrix random_plan(SplitMix64& rng, Index n, bool sparse = false) {
  Matrix x(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      x(i, j) = (sparse && rng.uniform() < 0.5) ? 0.0 : rng.uniform();
    }
  }
  if (x.sum() == 0.0) x(0, 0) = 1.0;
  return x / x.sum();
}

inline Matrix random_matrix(SplitMix64& rng, Index rows, Index cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

// Root of F(s) = s - Σ max(Z, s f) by bisection; F is increasing with slope >= 1 - n² f.
inline double bisect_scaled_root(const Matrix& z, double f) {
  auto F = [&](double s) { return s - z.cwiseMax(s * f).sum(); };
  double lo = 0.0, hi = std::max(1.0, z.sum() / (1.0 - f * static_cast<double>(z.size())));
  while (F(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 400 && hi - lo > 1e-17 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (F(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double tv_distance(const Vector& a, const Vector& b) { return 0.5 * (a - b).lpNorm<1>(); }

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace otwb::testing
