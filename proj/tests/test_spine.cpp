#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ancestral/error.hpp"
#include "ancestral/pde.hpp"
#include "ancestral/spine.hpp"
#include "ancestral/stats.hpp"
#include "common.hpp"

using namespace ancestral;

namespace {

const StationaryResult& example_stationary() {
  static const StationaryResult r = solve_stationary(testing::example1(), testing::example_grid(400));
  return r;
}

const SpineContext& example_context() {
  static const SpineContext ctx(testing::example1(), example_stationary().eigen, 2.0);
  return ctx;
}

// Two-sample KS critical value at the 1% level.
double ks_critical(std::size_t n, std::size_t m) {
  return 1.628 * std::sqrt(static_cast<double>(n + m) / static_cast<double>(n * m));
}

void expect_error(ErrorCode code, auto&& fn) {
  try {
    fn();
    FAIL("expected " << to_string(code));
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace

TEST_CASE("trait process without jumps is a drift line") {
  auto p = testing::example1(0.0, 0.2);
  MasterRng rng(1);
  auto a = sample_X(0.3, 2.0, p, rng);
  auto b = sample_X(0.3, 2.0, p, rng, true);
  CHECK(a.jumps().empty());
  CHECK(a.value_at(2.0) == doctest::Approx(0.7));
  CHECK(b.value_at(2.0) == doctest::Approx(-0.1));
}

TEST_CASE("jump counts are Poisson") {
  auto p = testing::example1(1.5, 0.0);
  MasterRng rng(2);
  const int n = 10000;
  const double T = 2.0, mu = 1.5 * T;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    double c = static_cast<double>(sample_X(0.0, T, p, rng).jumps().size());
    sum += c;
    sq += c * c;
  }
  double mean = sum / n, var = (sq - n * mean * mean) / (n - 1);
  CHECK(std::abs(mean - mu) <= 3.0 * std::sqrt(mu / n));
  CHECK(std::abs(var - mu) <= 3.0 * std::sqrt((mu + 2.0 * mu * mu) / n));
}

TEST_CASE("symmetric kernel without drift: X and X* agree in law") {
  auto p = testing::example1(1.0, 0.0);
  p.kernel = MutationKernel::gaussian(0.3);
  MasterRng rng(3);
  const std::size_t n = 10000;
  EmpiricalSample a, b;
  for (std::size_t k = 0; k < n; ++k) {
    a.values.push_back(sample_X(0.2, 1.0, p, rng).value_at(1.0));
    b.values.push_back(sample_X(0.2, 1.0, p, rng, true).value_at(1.0));
  }
  CHECK(ks_distance(a, b) <= ks_critical(n, n));
}

TEST_CASE("adjoint jumps of a non-symmetric tabulated kernel follow the kernel columns") {
  // m(x, y) = kernel of jumps biased to the right; X* jumps from x land in y with density m(y, x).
  const std::size_t n = 161;
  Grid g(-4.0, 4.0, n);
  std::vector<double> v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double z = g.x(j) - g.x(i) - 0.2;
      v[i * n + j] = std::exp(-0.5 * z * z / 0.09) / (0.3 * std::sqrt(2.0 * M_PI));
    }
  auto k = MutationKernel::tabulated(g, v);
  MasterRng rng(4);
  double mean = 0.0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) mean += k.sample_adjoint_target(0.5, next_uniform(rng)) / draws;
  CHECK(mean == doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("Monte Carlo expected mass in trivial cases") {
  MasterRng rng(5);
  auto flat = testing::constant_growth(0.7, 0.4, 0.1);
  auto one = estimate_mt(0.0, 1.5, flat, 0.7, 200, rng);
  CHECK(one.estimate == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(one.std_error <= 1e-13);
  auto grow = estimate_mt(0.0, 1.5, flat, 0.5, 200, rng);
  CHECK(grow.estimate == doctest::Approx(std::exp(0.2 * 1.5)).epsilon(1e-13));
  CHECK(grow.std_error <= 1e-12);
}

TEST_CASE("Monte Carlo expected mass matches the grid table") {
  const auto& ctx = example_context();
  MasterRng rng(6);
  for (double x : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    auto e = estimate_mt(x, 1.0, ctx.params(), ctx.lambda(), 10000, rng);
    CHECK(std::abs(e.estimate - ctx.m(1.0, x)) <= 3.0 * e.std_error);
  }
}

TEST_CASE("m-table invariants") {
  const auto& ctx = example_context();
  const Grid& g = ctx.grid();
  for (double v : ctx.m_grid(0.0)) CHECK(v == 1.0);
  for (double t : {0.5, 1.0, 2.0}) {
    auto m = ctx.m_grid(t);
    for (double v : m) CHECK(v > 0.0);
    CHECK(std::abs(g.inner(m, ctx.eigen().F.values()) - ctx.lambda()) <= 1e-3 * ctx.lambda());
  }
  CHECK(g.inner(ctx.m_grid(0.0), ctx.eigen().F.values()) == doctest::Approx(ctx.lambda()).epsilon(1e-14));
  CHECK(ctx.killing_constant() == doctest::Approx(std::max(1.0 - ctx.lambda(), 0.0) + 0.1));
  CHECK_THROWS_AS(ctx.m_grid(2.5), Error);
}

TEST_CASE("no killing means every proposal survives") {
  auto p = testing::constant_growth(0.6, 0.4, 0.0);
  Grid g = testing::example_grid(201);
  DensityField F(g, testing::bump(g, -1.0, 1.0));
  SpineOptions o;
  o.killing_margin = 0.0;
  SpineContext ctx(p, {F.scaled(0.6 / F.mass()), 0.6}, 1.0, o);
  CHECK(ctx.killing_constant() == 0.0);
  MasterRng rng(7);
  auto b = sample_spine_forward(SpineInit::at(0.0), 1.0, ctx, rng, 500);
  CHECK(b.accepted == 500);
  CHECK(b.acceptance_rate() == 1.0);
}

TEST_CASE("forward spine acceptance and marginal") {
  const auto& ctx = example_context();
  MasterRng rng(8);
  auto b = sample_spine_forward(SpineInit::at(0.0), 2.0, ctx, rng, 20000);
  double predicted = std::exp(-ctx.killing_constant() * 2.0) * ctx.m(2.0, 0.0);
  CHECK(std::abs(b.acceptance_rate() - predicted) <= 3.0 * b.acceptance_se());
  auto dens = forward_spine_marginal(ctx, 0.0, 2.0, 1.0);
  CHECK(wasserstein1(marginal(b.paths, 1.0), dens) <= 0.05);
  CHECK(dens.mass() == doctest::Approx(1.0));
}

TEST_CASE("acceptance floor") {
  const auto& ctx = example_context();
  SpineOptions o;
  o.acceptance_floor = 0.99;
  SpineContext strict(ctx.params(), ctx.eigen(), 2.0, o);
  MasterRng rng(9);
  expect_error(ErrorCode::AcceptanceTooLow, [&] { sample_spine_forward(SpineInit::at(0.0), 2.0, strict, rng, 1000); });
}

TEST_CASE("reversed process without jumps") {
  auto p = testing::example1(0.0, 0.2);
  Grid g = testing::example_grid(201);
  DensityField F(g, testing::bump(g, -3.0, 3.0));
  SpineContext ctx(p, {F, F.mass()}, 1.0);
  MasterRng rng(10);
  auto path = sample_reversed_from(0.5, 1.0, ctx, rng);
  REQUIRE(path);
  CHECK(path->jumps().empty());
  CHECK(path->value_at(1.0) == doctest::Approx(0.5 - 0.2));
}

TEST_CASE("flat F with a symmetric kernel: reversed process equals X in law") {
  auto p = testing::constant_growth(1.0, 1.0, 0.0);
  p.kernel = MutationKernel::gaussian(0.3);
  Grid g(-6.0, 6.0, 601);
  DensityField F(g, std::vector<double>(g.size(), 1.0));
  SpineContext ctx(p, {F, F.mass()}, 1.0);
  CHECK(ctx.kappa(0.0) == doctest::Approx(1.0).epsilon(1e-6));
  MasterRng rng(11);
  const std::size_t n = 10000;
  EmpiricalSample a, b;
  for (std::size_t k = 0; k < n; ++k) {
    auto r = sample_reversed_from(0.0, 1.0, ctx, rng);
    REQUIRE(r);
    a.values.push_back(r->value_at(1.0));
    b.values.push_back(sample_X(0.0, 1.0, p, rng).value_at(1.0));
  }
  CHECK(ks_distance(a, b) <= ks_critical(n, n));
}

TEST_CASE("reversed process generator") {
  const auto& ctx = example_context();
  const auto& p = ctx.params();
  auto phi = [](double y) { return std::exp(-2.0 * (y - 0.2) * (y - 0.2)); };
  auto dphi = [&](double y) { return -4.0 * (y - 0.2) * phi(y); };
  // Independent evaluation of the generator by fine quadrature of
  // gamma / F(x) * integral F(y) m(y, x) (phi(y) - phi(x)) dy, drift -rho.
  auto generator = [&](double x) {
    const double lo = x - 0.3, hi = x + 0.3;
    const int n = 6000;
    double s = 0.0;
    for (int k = 0; k < n; ++k) {
      double y = lo + (hi - lo) * (k + 0.5) / n;
      s += ctx.eigen().F.interpolate(y) * p.kernel.density(y, x) * (phi(y) - phi(x));
    }
    s *= (hi - lo) / n;
    return -p.rho * dphi(x) + p.gamma * s / ctx.F(x);
  };
  const double delta = 1e-2;
  MasterRng rng(12);
  const int n = 100000;
  for (double x : {-0.8, -0.3, 0.0, 0.4, 0.9}) {
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
      auto path = sample_reversed_from(x, delta, ctx, rng);
      REQUIRE(path);
      double v = (phi(path->value_at(delta)) - phi(x)) / delta;
      sum += v;
      sq += v * v;
    }
    double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
    // Second-order term: delta * (kappa + |rho|)^2 * sup |phi| bounds the Taylor remainder.
    double bias = delta * std::pow(ctx.kappa(x) + p.rho, 2) * 2.0;
    CHECK(std::abs(mean - generator(x)) <= bias + 3.0 * se);
  }
}

TEST_CASE("path reversal") {
  TraitPath flat(0.0, 3.0, 1.5, 0.0);
  auto r = reverse_path(flat, 3.0);
  for (double t : {0.0, 1.0, 3.0}) CHECK(r.value_at(t) == 1.5);

  TraitPath one(0.0, 3.0, 0.2, 0.0, {{1.0, 0.8}});
  auto q = reverse_path(one, 3.0);
  CHECK(q.value_at(0.0) == 0.8);
  CHECK(q.value_at(1.99) == 0.8);
  CHECK(q.value_at(2.0) == 0.2);
  CHECK(q.value_at(3.0) == 0.2);

  const auto& ctx = example_context();
  MasterRng rng(13);
  for (int k = 0; k < 50; ++k) {
    auto p = sample_X(0.0, 2.0, ctx.params(), rng);
    auto back = reverse_path(reverse_path(p, 2.0), 2.0);
    CHECK(back.jumps().size() == p.jumps().size());
    for (int s = 0; s < 200; ++s) {
      double t = 2.0 * (s + 0.37) / 200.0;
      bool at_jump = false;
      for (const Jump& j : p.jumps()) at_jump |= std::abs(j.time - t) < 1e-12;
      if (!at_jump) CHECK(back.value_at(t) == doctest::Approx(p.value_at(t)));
    }
  }
}

TEST_CASE("marginal law of the spine on the grid") {
  const auto& ctx = example_context();
  CHECK(marginal_check_spine(ctx, 2.0, 0.0) == 0.0);
  CHECK(marginal_check_spine(ctx, 2.0, 1.0) <= 1e-3);
  CHECK(marginal_check_spine(ctx, 2.0, 2.0) <= 1e-3);
}

TEST_CASE("reversed forward spine matches the reversed process") {
  const auto& ctx = example_context();
  MasterRng rng(14);
  auto fwd = sample_spine_forward(SpineInit::biased(), 2.0, ctx, rng, 0, 10000);
  std::vector<TraitPath> flipped;
  for (const auto& p : fwd.paths) flipped.push_back(reverse_path(p, 2.0));
  auto rev = sample_reversed(2.0, ctx, rng, 10000);
  CHECK(rev.paths.size() == 10000);
  for (double t : {0.5, 1.0, 1.5}) CHECK(wasserstein1(marginal(flipped, t), marginal(rev.paths, t)) <= 0.05);
  // Killed process from F / lambda, conditioned to survive: F is quasi-stationary.
  CHECK(wasserstein1(marginal(fwd.paths, 2.0), ctx.eigen().F) <= 0.05);
}

TEST_CASE("floor exits") {
  const auto& ctx = example_context();
  SpineOptions o;
  o.floor_rel = 0.5;
  SpineContext tight(ctx.params(), ctx.eigen(), 2.0, o);
  MasterRng rng(15);
  CHECK_FALSE(sample_reversed_from(2.5, 1.0, tight, rng).has_value());
  expect_error(ErrorCode::FloorExit, [&] { sample_reversed(2.0, tight, rng, 2000); });
}

TEST_CASE("context requires a positive eigenvalue") {
  Grid g = testing::example_grid(101);
  DensityField F(g, testing::bump(g, -1.0, 1.0));
  expect_error(ErrorCode::NonPositiveLambda, [&] { SpineContext(testing::example1(), {F, 0.0}, 1.0); });
}

TEST_CASE("reversal consistency under strong drift") {
  // With rho = 0.1 the reversed lineage drifts visibly; the two constructions
  // only agree when the reversed process moves against the forward drift.
  auto p = testing::example1(0.4, 0.1);
  auto st = solve_stationary(p, testing::example_grid(400));
  SpineContext ctx(p, st.eigen, 2.0);
  MasterRng rng(16);
  auto fwd = sample_spine_forward(SpineInit::biased(), 2.0, ctx, rng, 0, 10000);
  std::vector<TraitPath> flipped;
  for (const auto& path : fwd.paths) flipped.push_back(reverse_path(path, 2.0));
  auto rev = sample_reversed(2.0, ctx, rng, 10000);
  for (double t : {0.5, 1.0, 1.5}) {
    auto a = marginal(flipped, t), b = marginal(rev.paths, t);
    CHECK(wasserstein1(a, b) <= 0.05);
    double ma = std::accumulate(a.values.begin(), a.values.end(), 0.0) / a.values.size();
    double mb = std::accumulate(b.values.begin(), b.values.end(), 0.0) / b.values.size();
    CHECK(std::abs(ma - mb) <= 0.02);
  }
}
