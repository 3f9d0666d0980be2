#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ancestral/model.hpp"
#include "ancestral/rng.hpp"

namespace testing {

// b = 1, d = x^2 / 2, uniform mutations of half-width 0.3.
inline ancestral::ModelParams example1(double gamma = 0.4, double rho = 0.001, int K = 1000) {
  using ancestral::Polynomial;
  return {Polynomial({1.0}), Polynomial({0.0, 0.0, 0.5}), gamma, rho, ancestral::MutationKernel::uniform(0.3), K, 1, {}};
}

// h = r everywhere (birth r, no natural death).
inline ancestral::ModelParams constant_growth(double r, double gamma = 0.0, double rho = 0.0, int K = 1000) {
  using ancestral::Polynomial;
  return {Polynomial({r}), Polynomial({0.0}), gamma, rho, ancestral::MutationKernel::uniform(0.3), K, 1, {}};
}

inline ancestral::Grid example_grid(std::size_t n = 401) { return ancestral::Grid(-4.0, 4.0, n); }

// Smooth bump with support inside [a, b], scaled to sup 1.
inline std::vector<double> bump(const ancestral::Grid& g, double a, double b) {
  std::vector<double> f(g.size(), 0.0);
  const double c = 0.5 * (a + b), w = 0.5 * (b - a);
  for (std::size_t i = 0; i < f.size(); ++i) {
    double z = (g.x(i) - c) / w;
    if (std::abs(z) < 1.0) f[i] = (1 - z * z) * (1 - z * z);
  }
  return f;
}

inline std::vector<double> random_compact(const ancestral::Grid& g, ancestral::MasterRng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double a = -3.0 + 5.0 * u(rng);
  double b = a + 0.2 + (3.0 - a - 0.2) * u(rng);
  auto f = bump(g, a, b);
  for (double& v : f) v *= 0.5 + u(rng);
  double mx = *std::max_element(f.begin(), f.end());
  if (mx > 0)
    for (double& v : f) v /= mx;
  return f;
}

inline double sup_norm(const std::vector<double>& f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace testing
