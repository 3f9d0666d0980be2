#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ancestral/error.hpp"
#include "ancestral/ibm.hpp"
#include "ancestral/pde.hpp"
#include "ancestral/stats.hpp"
#include "common.hpp"

using namespace ancestral;

namespace {

EmpiricalSample random_sample(MasterRng& rng, std::size_t n, double shift = 0.0) {
  std::normal_distribution<double> z(shift, 1.0);
  EmpiricalSample s;
  for (std::size_t i = 0; i < n; ++i) s.values.push_back(z(rng));
  return s;
}

// Integral over u in (0, 1) of |Qa(u) - Qb(u)| for unweighted samples.
double quantile_w1(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> cuts;
  for (std::size_t i = 0; i <= a.size(); ++i) cuts.push_back(static_cast<double>(i) / a.size());
  for (std::size_t i = 0; i <= b.size(); ++i) cuts.push_back(static_cast<double>(i) / b.size());
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    double lo = cuts[k], hi = cuts[k + 1];
    if (hi <= lo) continue;
    double mid = 0.5 * (lo + hi);
    auto qa = a[std::min(a.size() - 1, static_cast<std::size_t>(mid * a.size()))];
    auto qb = b[std::min(b.size() - 1, static_cast<std::size_t>(mid * b.size()))];
    total += (hi - lo) * std::abs(qa - qb);
  }
  return total;
}

double brute_ks(const std::vector<double>& a, const std::vector<double>& b) {
  auto cdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) / s.size();
  };
  double best = 0.0;
  for (const auto* s : {&a, &b})
    for (double x : *s) best = std::max(best, std::abs(cdf(a, x) - cdf(b, x)));
  return best;
}

const StationaryResult& example_stationary() {
  static const StationaryResult r = solve_stationary(testing::example1(), testing::example_grid(400));
  return r;
}

std::vector<PopulationHistory> small_histories(int count, int K, double T, std::uint64_t base, Mode mode = Mode::Nonlinear) {
  const auto& st = example_stationary();
  auto p = testing::example1(0.4, 0.001, K);
  SimulationOptions o;
  o.mode = mode;
  o.frozen_lambda = st.eigen.lambda;
  std::vector<PopulationHistory> out;
  for (int k = 0; k < count; ++k) {
    auto seed = replicate_seed(base, static_cast<std::uint64_t>(k));
    out.push_back(simulate(p, init_population(p, st.eigen.F, seed), T, seed, o));
  }
  return out;
}

}  // namespace

TEST_CASE("wasserstein distance basics") {
  EmpiricalSample a{{0.3, -1.0, 2.0}, {}};
  CHECK(wasserstein1(a, a) == 0.0);
  CHECK(wasserstein1(EmpiricalSample{{0.0}, {}}, EmpiricalSample{{1.0}, {}}) == 1.0);
  EmpiricalSample weighted{{0.0, 1.0}, {3.0, 1.0}};
  EmpiricalSample replicated{{0.0, 0.0, 0.0, 1.0}, {}};
  CHECK(wasserstein1(weighted, replicated) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(wasserstein1(EmpiricalSample{}, a), Error);
  CHECK_THROWS_AS(wasserstein1(EmpiricalSample{{1.0}, {-1.0}}, a), Error);
}

TEST_CASE("wasserstein distance against the quantile integral") {
  MasterRng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_sample(rng, 100), b = random_sample(rng, trial % 2 ? 100 : 37, 0.4);
    double w = wasserstein1(a, b);
    CHECK(w == doctest::Approx(quantile_w1(a.values, b.values)).epsilon(1e-12));
    CHECK(w == doctest::Approx(wasserstein1(b, a)).epsilon(1e-12));
    CHECK(w > 0.0);
  }
}

TEST_CASE("ks distance") {
  EmpiricalSample a{{0.1, 0.5, 0.9}, {}};
  CHECK(ks_distance(a, a) == 0.0);
  CHECK(ks_distance(a, EmpiricalSample{{2.0, 3.0}, {}}) == 1.0);
  MasterRng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_sample(rng, 60), y = random_sample(rng, 45, 0.3);
    // Ties exercise the merged sweep.
    for (double& v : x.values) v = std::round(v * 4.0) / 4.0;
    for (double& v : y.values) v = std::round(v * 4.0) / 4.0;
    CHECK(ks_distance(x, y) == doctest::Approx(brute_ks(x.values, y.values)).epsilon(1e-14));
    CHECK(ks_distance(x, y) == ks_distance(y, x));
  }
}

TEST_CASE("zero distance exactly for equal multisets") {
  MasterRng rng(3);
  auto a = random_sample(rng, 80);
  EmpiricalSample b = a;
  std::shuffle(b.values.begin(), b.values.end(), rng);
  CHECK(wasserstein1(a, b) == 0.0);
  CHECK(ks_distance(a, b) == 0.0);
  b.values[5] += 1e-9;
  CHECK(wasserstein1(a, b) > 0.0);
  CHECK(ks_distance(a, b) > 0.0);
}

TEST_CASE("wasserstein distance to a grid density") {
  const auto& st = example_stationary();
  const DensityField& F = st.eigen.F;
  const Grid& g = F.grid();
  MasterRng rng(4);
  auto s = random_sample(rng, 200);
  for (double& v : s.values) v *= 0.4;
  std::sort(s.values.begin(), s.values.end());
  // Fine midpoint integration of |F_sample - F_density|, density piecewise constant on cells.
  std::vector<double> cdf(g.size() + 1, 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) cdf[k + 1] = cdf[k] + F[k] * g.dx() / F.mass();
  const int n = 400000;
  const double lo = g.lo_edge(), hi = g.hi_edge();
  double oracle = 0.0;
  for (int k = 0; k < n; ++k) {
    double x = lo + (hi - lo) * (k + 0.5) / n;
    double fe = static_cast<double>(std::upper_bound(s.values.begin(), s.values.end(), x) - s.values.begin()) /
                s.values.size();
    double pos = (x - lo) / g.dx();
    auto c = std::min<std::size_t>(static_cast<std::size_t>(pos), g.size() - 1);
    double fd = cdf[c] + (pos - c) * (cdf[c + 1] - cdf[c]);
    oracle += std::abs(fe - fd) * (hi - lo) / n;
  }
  CHECK(wasserstein1(s, F) == doctest::Approx(oracle).epsilon(1e-4));
  CHECK(wasserstein1(s, F) == doctest::Approx(wasserstein1(s, F.scaled(3.0))).epsilon(1e-12));
}

TEST_CASE("marginals of path collections") {
  std::vector<TraitPath> paths{TraitPath(0.0, 1.0, 0.0, 1.0), TraitPath(0.0, 1.0, 2.0, 0.0, {{0.5, 3.0}})};
  auto m = marginal(paths, 0.75);
  CHECK(m.values == std::vector<double>{0.75, 3.0});
}

TEST_CASE("lineage comparison does not depend on replicate order") {
  const auto& st = example_stationary();
  SpineContext ctx(testing::example1(), st.eigen, 2.0);
  auto hs = small_histories(30, 100, 2.0, 77);
  MasterRng r1(5), r2(5), shuffle(6);
  auto a = reversed_lineage_comparison(hs, ctx, 2.0, {0.5, 1.0, 1.5}, 500, r1, {10, 2});
  std::shuffle(hs.begin(), hs.end(), shuffle);
  auto b = reversed_lineage_comparison(hs, ctx, 2.0, {0.5, 1.0, 1.5}, 500, r2, {10, 2});
  REQUIRE(a.checkpoints.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(a.checkpoints[c].w1 == b.checkpoints[c].w1);
    CHECK(a.checkpoints[c].ks == b.checkpoints[c].ks);
    CHECK(a.checkpoints[c].self_distance == b.checkpoints[c].self_distance);
    CHECK(a.checkpoints[c].tolerance == 3.0 * a.checkpoints[c].self_distance);
  }
  CHECK(a.lineages + a.extinct == 30);
}

TEST_CASE("comparison on picked lineages reproduces the full comparison") {
  const auto& st = example_stationary();
  SpineContext ctx(testing::example1(), st.eigen, 2.0);
  auto hs = small_histories(20, 100, 2.0, 91);
  MasterRng r1(8), r2(8);
  auto full = reversed_lineage_comparison(hs, ctx, 2.0, {1.0}, 300, r1, {5, 1});
  const std::uint64_t key = r2();
  std::vector<TraitPath> picked;
  for (const auto& h : hs) picked.push_back(reverse_path(pick_lineage(h, 2.0, key), 2.0));
  auto part = compare_reversed_lineages(picked, 0, ctx, 2.0, {1.0}, 300, r2, {5, 1});
  CHECK(full.checkpoints[0].w1 == part.checkpoints[0].w1);
  CHECK(full.checkpoints[0].self_distance == part.checkpoints[0].self_distance);
}

TEST_CASE("checkpoint zero compares the sampled traits at T") {
  auto hs = small_histories(5, 100, 2.0, 13);
  for (const auto& h : hs) {
    auto path = pick_lineage(h, 2.0, 42);
    auto rev = reverse_path(path, 2.0);
    CHECK(rev.value_at(0.0) == doctest::Approx(path.value_at(2.0)));
    bool found = false;
    for (double x : snapshot(h, 2.0).values) found |= std::abs(x - path.value_at(2.0)) < 1e-12;
    CHECK(found);
  }
}

TEST_CASE("too few survivors") {
  const auto& st = example_stationary();
  SpineContext ctx(testing::example1(), st.eigen, 2.0);
  auto hs = small_histories(3, 100, 2.0, 5);
  MasterRng rng(1);
  try {
    reversed_lineage_comparison(hs, ctx, 2.0, {1.0}, 100, rng, {10, 1});
    FAIL("expected TooFewSurvivors");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewSurvivors);
  }
}

TEST_CASE("frozen histories pass the calibrated tolerance") {
  const auto& st = example_stationary();
  SpineContext ctx(testing::example1(), st.eigen, 4.0);
  auto hs = small_histories(200, 300, 4.0, 1234, Mode::Frozen);
  MasterRng rng(9);
  auto rep = reversed_lineage_comparison(hs, ctx, 4.0, {1.0, 2.0, 3.0}, 5000, rng, {10, 10});
  for (const auto& c : rep.checkpoints) {
    CHECK(c.w1 <= 0.1);
    CHECK(c.w1 <= c.tolerance);
  }
}
