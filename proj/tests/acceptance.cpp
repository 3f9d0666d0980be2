// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "ancestral/error.hpp"
#include "ancestral/ibm.hpp"
#include "ancestral/operators.hpp"
#include "ancestral/pde.hpp"
#include "ancestral/spine.hpp"
#include "ancestral/stats.hpp"
#include "common.hpp"

using namespace ancestral;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    passed = passed && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [fail]");
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double l1_diff(const Grid& g, std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  return g.l1(d);
}

DensityField gaussian_bump(const Grid& g, double mean, double sd, double mass) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(-0.5 * std::pow((g.x(i) - mean) / sd, 2));
  DensityField f(g, v);
  return f.scaled(mass / f.mass());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < std::min(jobs, n); ++j)
    pool.emplace_back([&] {
      for (std::size_t k; (k = next++) < n;) body(k);
    });
  for (auto& t : pool) t.join();
}

const StationaryResult& example_stationary() {
  static const StationaryResult r = solve_stationary(testing::example1(), testing::example_grid(400));
  return r;
}

const SpineContext& example_context() {
  static const SpineContext ctx(testing::example1(), example_stationary().eigen, 2.0);
  return ctx;
}

Outcome generator_duality() {
  Outcome o;
  auto p = testing::example1();
  Grid g = testing::example_grid(400);
  auto L = generator_matrix(p, g, Which::L);
  auto Ls = generator_matrix(p, g, Which::Lstar);
  MasterRng rng(101);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    auto f = testing::random_compact(g, rng);
    auto h = testing::random_compact(g, rng);
    worst = std::max(worst, std::abs(duality_residual(L, Ls, f, h)) / (testing::sup_norm(f) * g.l1(h)));
  }
  o.require(worst <= 1e-8, fmt("max |<Lf,g>-<f,L*g>|/(|f|inf |g|1) = %.2e over 100 pairs", worst));
  return o;
}

Outcome semigroup_duality() {
  Outcome o;
  auto p = testing::example1();
  Grid g = testing::example_grid(400);
  const double lambda = example_stationary().eigen.lambda;
  const double c = p.growth_bound();
  const double dt = 0.5 * stability_bound(p, g, lambda);
  MasterRng rng(102);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    auto f = testing::random_compact(g, rng);
    auto h = testing::random_compact(g, rng);
    double r = fk_duality_residual(f, h, 1.0, p, g, lambda, dt);
    worst = std::max(worst, std::abs(r) / ((std::exp(c) + 1.0) * testing::sup_norm(f) * g.l1(h)));
  }
  o.require(worst <= 1e-6, fmt("max residual/((e^ct+1)|f|inf |g|1) = %.2e over 20 pairs, t=1", worst));
  return o;
}

Outcome eigenpair() {
  Outcome o;
  auto p = testing::example1();
  double worst_res = 0.0, worst_l1 = 0.0, worst_lambda = 0.0, min_lambda = 1e300;
  for (std::size_t n : {200u, 400u, 600u}) {
    Grid g = testing::example_grid(n);
    auto st = solve_stationary(p, g);
    auto dense = dense_eigen_oracle(p, g);
    worst_res = std::max(worst_res, st.residual / st.eigen.lambda);
    worst_l1 = std::max(worst_l1, l1_diff(g, st.eigen.F.values(), dense.F.values()));
    worst_lambda = std::max(worst_lambda, std::abs(st.eigen.lambda - dense.lambda));
    min_lambda = std::min(min_lambda, st.eigen.lambda);
  }
  o.require(worst_res <= 1e-6, fmt("residual/lambda %.2e", worst_res));
  o.require(worst_l1 <= 1e-6, fmt("L1 vs dense %.2e", worst_l1));
  o.require(worst_lambda <= 1e-8, fmt("|lambda - dense| %.2e", worst_lambda));
  o.require(min_lambda > 0.0, fmt("lambda %.6f", min_lambda));
  return o;
}

Outcome certificate() {
  Outcome o;
  auto c = lambda_sufficient_check(testing::example1(), 1.0);
  o.require(c.holds && std::abs(c.inf_h - 0.5) < 1e-12 && std::abs(c.lhs - 0.018) < 1e-12 &&
                std::abs(c.rhs - 0.012) < 1e-12,
            fmt("x1=1: inf h %.3f > gamma %.3f, %.4f >= %.4f", c.inf_h, c.gamma, c.lhs, c.rhs));
  int held = 0, confirmed = 0;
  Grid g = testing::example_grid(201);
  for (double gamma : {0.1, 0.2, 0.3, 0.4, 0.6})
    for (double rho : {0.0, 0.0005, 0.001, 0.003}) {
      auto p = testing::example1(gamma, rho);
      if (!lambda_sufficient_check(p, 1.0).holds) continue;
      ++held;
      double lambda = dense_eigen_oracle(p, g).lambda;
      confirmed += lambda > 0.0;
    }
  o.require(held > 0 && confirmed == held, fmt("sweep of 20: certificate held %d, lambda > 0 in %d", held, confirmed));
  return o;
}

Outcome nonlinear_pde() {
  Outcome o;
  const double r = 0.8;
  auto flat = testing::constant_growth(r, 0.4, 0.001);
  Grid g = testing::example_grid(201);
  double worst = 0.0;
  for (double n0 : {0.1, 2.0}) {
    auto traj = evolve_nonlinear(gaussian_bump(g, 0.0, 0.5, n0), 5.0, flat, 1e-3);
    double exact = r * n0 * std::exp(r * 5.0) / (r + n0 * (std::exp(r * 5.0) - 1.0));
    worst = std::max(worst, std::abs(traj.masses.back() - exact));
  }
  o.require(worst <= 1e-4, fmt("logistic mass error %.2e at T=5", worst));

  auto p = testing::example1();
  const auto& st = example_stationary();
  const Grid& g4 = st.eigen.F.grid();
  auto fT = evolve_nonlinear(st.eigen.F, 5.0, p, 1e-2).fields.back();
  double drift = l1_diff(g4, fT.values(), st.eigen.F.values());
  o.require(drift <= 5e-3, fmt("|f_T - F|_1 %.2e", drift));
  auto moved = fk_propagate(st.eigen.F.values(), 1.0, p, g4, st.eigen.lambda, Semigroup::PhatStar, 1e-3);
  double inv = l1_diff(g4, moved, st.eigen.F.values());
  o.require(inv <= 5e-3, fmt("|PhatStar_1 F - F|_1 %.2e", inv));
  return o;
}

Outcome feynman_kac() {
  Outcome o;
  const auto& ctx = example_context();
  MasterRng rng(106);
  double worst_z = 0.0;
  for (double x : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    auto e = estimate_mt(x, 1.0, ctx.params(), ctx.lambda(), 10000, rng);
    worst_z = std::max(worst_z, std::abs(e.estimate - ctx.m(1.0, x)) / e.std_error);
  }
  o.require(worst_z <= 3.0, fmt("max |MC - grid|/SE %.2f at 5 points", worst_z));

  const Grid& g = ctx.grid();
  double grid_pair = g.inner(ctx.m_grid(1.0), ctx.eigen().F.values());
  o.require(std::abs(grid_pair - ctx.lambda()) <= 1e-3 * ctx.lambda(),
            fmt("<m_1,F> %.6f vs lambda %.6f", grid_pair, ctx.lambda()));
  // lambda * E[m_1(X0)] with X0 ~ F / lambda, one path per start.
  const auto& F = ctx.eigen().F;
  double sum = 0.0, sum2 = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    double x = F.inverse_cdf(next_uniform(rng));
    double w = ctx.lambda() * estimate_mt(x, 1.0, ctx.params(), ctx.lambda(), 1, rng).estimate;
    sum += w;
    sum2 += w * w;
  }
  double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / (n - 1));
  o.require(std::abs(mean - ctx.lambda()) <= 3.0 * se, fmt("MC <m_1,F> %.4f +- %.4f", mean, se));
  return o;
}

Outcome spinal_sampler() {
  Outcome o;
  const auto& ctx = example_context();
  MasterRng rng(107);
  auto b = sample_spine_forward(SpineInit::at(0.0), 2.0, ctx, rng, 100000);
  double predicted = std::exp(-ctx.killing_constant() * 2.0) * ctx.m(2.0, 0.0);
  double z = (b.acceptance_rate() - predicted) / b.acceptance_se();
  o.require(std::abs(z) <= 3.0, fmt("acceptance %.4f vs %.4f (z=%.2f)", b.acceptance_rate(), predicted, z));
  auto many = sample_spine_forward(SpineInit::at(0.0), 2.0, ctx, rng, 0, 10000);
  double w1 = wasserstein1(marginal(many.paths, 1.0), forward_spine_marginal(ctx, 0.0, 2.0, 1.0));
  o.require(w1 <= 0.05, fmt("W1 at t=1 %.4f (%zu accepted)", w1, many.accepted));
  return o;
}

Outcome reversed_marginal() {
  Outcome o;
  const auto& ctx = example_context();
  double r = marginal_check_spine(ctx, 2.0, 1.0);
  o.require(r <= 1e-3, fmt("marginal residual %.2e at (T,t)=(2,1)", r));
  MasterRng rng(108);
  auto fwd = sample_spine_forward(SpineInit::biased(), 2.0, ctx, rng, 0, 10000);
  double w1 = wasserstein1(marginal(fwd.paths, 2.0), ctx.eigen().F);
  o.require(w1 <= 0.05, fmt("quasi-stationarity W1 %.4f", w1));
  return o;
}

Outcome lineage_agreement() {
  Outcome o;
  const auto& st = example_stationary();
  const double T = 10.0;
  const std::vector<double> checkpoints{2.5, 5.0, 7.5};
  const std::uint64_t seed = 20240611;
  SpineContext ctx(testing::example1(), st.eigen, T);
  auto p = testing::example1(0.4, 0.001, 1000);
  MasterRng rng(seed);
  const std::uint64_t key = rng();
  const std::size_t reps = 500;
  std::vector<std::optional<TraitPath>> picked(reps);
  parallel_for(reps, [&](std::size_t k) {
    auto s = replicate_seed(seed, k);
    auto h = simulate(p, init_population(p, st.eigen.F, s), T, s);
    if (!alive_at(h, T).empty()) picked[k] = reverse_path(pick_lineage(h, T, key), T);
  });
  std::vector<TraitPath> lineages;
  for (auto& l : picked)
    if (l) lineages.push_back(std::move(*l));
  auto rep = compare_reversed_lineages(lineages, reps - lineages.size(), ctx, T, checkpoints, 10000, rng);
  for (const auto& c : rep.checkpoints)
    o.require(c.w1 <= 0.1 && c.w1 <= 3.0 * c.self_distance,
              fmt("t=%.1f W1 %.4f (3x self %.4f)", c.time, c.w1, 3.0 * c.self_distance));
  o.detail += fmt("; %zu lineages", rep.lineages);
  return o;
}

// sup over a time grid of |<Z_t, x ^ 5>| differences between coupled runs.
double coupling_gap(const PopulationHistory& a, const PopulationHistory& b, double T) {
  auto functional = [](const EmpiricalSample& s) {
    return s.total_weight() * s.mean([](double x) { return std::min(x, 5.0); });
  };
  double gap = 0.0;
  for (int k = 0; k <= 100; ++k) {
    double t = T * k / 100.0;
    gap = std::max(gap, std::abs(functional(snapshot(a, t)) - functional(snapshot(b, t))));
  }
  return gap;
}

Outcome convergence_trend() {
  Outcome o;
  const auto& st = example_stationary();
  const double T = 5.0;
  const std::size_t reps = 50;
  auto fT = evolve_nonlinear(st.eigen.F, T, testing::example1(), 1e-2).fields.back();
  std::vector<double> w1_median, gap_median;
  for (int K : {100, 1000}) {
    auto p = testing::example1(0.4, 0.001, K);
    std::vector<double> w1(reps), gap(reps);
    parallel_for(reps, [&](std::size_t k) {
      auto s = replicate_seed(hash_words(7, {static_cast<std::uint64_t>(K)}), k);
      auto init = init_population(p, st.eigen.F, s);
      auto nonlinear = simulate(p, init, T, s);
      SimulationOptions frozen;
      frozen.mode = Mode::Frozen;
      frozen.frozen_lambda = st.eigen.lambda;
      auto linear = simulate(p, init, T, s, frozen);
      w1[k] = wasserstein1(snapshot(nonlinear, T), fT);
      gap[k] = coupling_gap(nonlinear, linear, T);
    });
    w1_median.push_back(median(w1));
    gap_median.push_back(median(gap));
  }
  o.require(w1_median[1] < w1_median[0], fmt("median W1 %.4f (K=100) -> %.4f (K=1000)", w1_median[0], w1_median[1]));
  o.require(gap_median[1] < gap_median[0],
            fmt("median coupling gap %.4f -> %.4f", gap_median[0], gap_median[1]));
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "generator duality", 1.0, generator_duality},
      {2, "semigroup duality", 5.0, semigroup_duality},
      {3, "eigenpair", 30.0, eigenpair},
      {4, "lambda positivity certificate", 120.0, certificate},
      {5, "nonlinear PDE", 60.0, nonlinear_pde},
      {6, "Feynman-Kac consistency", 60.0, feynman_kac},
      {7, "spinal sampler", 120.0, spinal_sampler},
      {8, "reversed-process marginal law", 60.0, reversed_marginal},
      {9, "sampled lineages vs reversed process", 1800.0, lineage_agreement},
      {10, "IBM-to-PDE convergence trend", 1800.0, convergence_trend},
  };
  // Shared fixtures are built outside the timed sections.
  example_context();
  int failures = 0;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const Error& e) {
      out.passed = false;
      out.detail = std::string("error: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) out.require(false, fmt("runtime %.1f s over %.0f s", secs, c.budget_seconds));
    failures += !out.passed;
    std::printf("%s criterion %d (%s): %s (%.2f s)\n", out.passed ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
