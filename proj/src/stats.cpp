#include "ancestral/stats.hpp"

#include <algorithm>
#include <cmath>

#include "ancestral/error.hpp"

namespace ancestral {

double EmpiricalSample::total_weight() const {
  if (weights.empty()) return static_cast<double>(values.size());
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

namespace {

struct Atom {
  double x;
  double w;
};

std::vector<Atom> normalised_atoms(const EmpiricalSample& s) {
  if (s.values.empty()) fail(ErrorCode::InvalidArgument, "empty sample");
  if (!s.weights.empty() && s.weights.size() != s.values.size())
    fail(ErrorCode::InvalidArgument, "weights and values differ in length");
  const double total = s.total_weight();
  if (!(total > 0.0)) fail(ErrorCode::InvalidArgument, "sample weights must have positive sum");
  std::vector<Atom> atoms(s.values.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    double w = s.weights.empty() ? 1.0 : s.weights[i];
    if (w < 0.0) fail(ErrorCode::InvalidArgument, "negative sample weight");
    atoms[i] = {s.values[i], w / total};
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.x < b.x; });
  return atoms;
}

// Sweeps the merged support, calling visit(gap, Fa, Fb) for each interval
// between consecutive support points and jump(Fa, Fb) after each point.
template <class Gap, class Point>
void sweep(const std::vector<Atom>& a, const std::vector<Atom>& b, Gap&& gap, Point&& point) {
  std::size_t i = 0, j = 0;
  double Fa = 0.0, Fb = 0.0;
  double prev = std::min(a.front().x, b.front().x);
  while (i < a.size() || j < b.size()) {
    double x = std::min(i < a.size() ? a[i].x : INFINITY, j < b.size() ? b[j].x : INFINITY);
    gap(x - prev, Fa, Fb);
    while (i < a.size() && a[i].x == x) Fa += a[i++].w;
    while (j < b.size() && b[j].x == x) Fb += b[j++].w;
    if (i == a.size()) Fa = 1.0;
    if (j == b.size()) Fb = 1.0;
    point(Fa, Fb);
    prev = x;
  }
}

// Integral over an interval of length len of |c - d(s)| with d linear from d0 to d1.
double abs_linear_integral(double c, double d0, double d1, double len) {
  double a0 = c - d0, a1 = c - d1;
  if (a0 * a1 >= 0.0) return std::abs(0.5 * (a0 + a1)) * len;
  return len * (a0 * a0 + a1 * a1) / (2.0 * (std::abs(a0) + std::abs(a1)));
}

}  // namespace

double wasserstein1(const EmpiricalSample& a, const EmpiricalSample& b) {
  auto A = normalised_atoms(a), B = normalised_atoms(b);
  double total = 0.0;
  sweep(A, B, [&](double len, double Fa, double Fb) { total += std::abs(Fa - Fb) * len; }, [](double, double) {});
  return total;
}

double ks_distance(const EmpiricalSample& a, const EmpiricalSample& b) {
  auto A = normalised_atoms(a), B = normalised_atoms(b);
  double best = 0.0;
  sweep(A, B, [](double, double, double) {}, [&](double Fa, double Fb) { best = std::max(best, std::abs(Fa - Fb)); });
  return best;
}

double wasserstein1(const EmpiricalSample& a, const DensityField& density) {
  auto atoms = normalised_atoms(a);
  const Grid& g = density.grid();
  const double mass = density.mass();
  if (!(mass > 0.0)) fail(ErrorCode::InvalidArgument, "density has zero mass");
  std::vector<double> cdf(g.size() + 1, 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) cdf[k + 1] = cdf[k] + density[k] * g.dx() / mass;
  auto density_cdf = [&](double x) {
    if (x <= g.lo_edge()) return 0.0;
    if (x >= g.hi_edge()) return 1.0;
    double s = (x - g.lo_edge()) / g.dx();
    auto k = std::min<std::size_t>(static_cast<std::size_t>(s), g.size() - 1);
    double w = s - static_cast<double>(k);
    return std::min(1.0, cdf[k] + w * (cdf[k + 1] - cdf[k]));
  };
  std::vector<double> pts;
  pts.reserve(atoms.size() + g.size() + 1);
  for (const Atom& at : atoms) pts.push_back(at.x);
  for (std::size_t k = 0; k <= g.size(); ++k) pts.push_back(g.lo_edge() + static_cast<double>(k) * g.dx());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  double total = 0.0, Fe = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    while (i < atoms.size() && atoms[i].x <= pts[k]) Fe += atoms[i++].w;
    if (i == atoms.size()) Fe = 1.0;
    total += abs_linear_integral(Fe, density_cdf(pts[k]), density_cdf(pts[k + 1]), pts[k + 1] - pts[k]);
  }
  return total;
}

EmpiricalSample marginal(const std::vector<TraitPath>& paths, double t) {
  EmpiricalSample s;
  s.values.reserve(paths.size());
  for (const TraitPath& p : paths) s.values.push_back(p.value_at(t));
  return s;
}

double marginal_check_spine(const SpineContext& ctx, double T, double t) {
  if (!(t >= 0.0 && t <= T)) fail(ErrorCode::InvalidArgument, "marginal check needs 0 <= t <= T");
  const Grid& g = ctx.grid();
  const double lambda = ctx.lambda();
  // The spine density divided by m_{T-s} evolves under PhatStar.
  std::vector<double> base(ctx.eigen().F.values());
  for (double& v : base) v /= lambda;
  FeynmanKac op(ctx.params(), g, lambda, Semigroup::PhatStar);
  auto moved = op.propagate(base, t, ctx.options().mt_dt);
  auto m = ctx.m_grid(T - t);
  std::vector<double> diff(g.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = m[i] * (moved[i] - base[i]);
  return g.l1(diff);
}

DensityField forward_spine_marginal(const SpineContext& ctx, double x, double T, double t) {
  if (!(t >= 0.0 && t <= T)) fail(ErrorCode::InvalidArgument, "spine marginal needs 0 <= t <= T");
  const Grid& g = ctx.grid();
  std::vector<double> delta(g.size(), 0.0);
  delta[g.nearest(x)] = 1.0 / g.dx();
  FeynmanKac op(ctx.params(), g, ctx.lambda(), Semigroup::PhatStar);
  auto moved = op.propagate(delta, t, ctx.options().mt_dt);
  auto m = ctx.m_grid(T - t);
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = std::max(0.0, moved[i] * m[i]);
  DensityField out(g, std::move(moved));
  return out.scaled(1.0 / out.mass());
}

}  // namespace ancestral
