#include "ancestral/spine.hpp"

#include <algorithm>
#include <cmath>

#include "ancestral/error.hpp"
#include "ancestral/ibm.hpp"

namespace ancestral {

namespace {

double exponential(MasterRng& rng, double rate) { return -std::log(next_uniform(rng)) / rate; }

}  // namespace

SpineContext::SpineContext(ModelParams params, EigenPair eigen, double horizon, SpineOptions options)
    : params_(std::move(params)), eigen_(std::move(eigen)), horizon_(horizon), options_(options) {
  if (!(eigen_.lambda > 0.0)) fail(ErrorCode::NonPositiveLambda, "spine needs lambda > 0");
  if (!(horizon >= 0.0)) fail(ErrorCode::InvalidArgument, "horizon must be nonnegative");
  C_ = std::max(params_.growth_bound() - eigen_.lambda, 0.0) + options_.killing_margin;
  F_max_ = *std::max_element(eigen_.F.values().begin(), eigen_.F.values().end());
  floor_ = options_.floor_rel * F_max_;

  const Grid& g = grid();
  FeynmanKac op(params_, g, eigen_.lambda, Semigroup::Phat);
  const std::size_t per_record = std::max<std::size_t>(1, euler_steps(options_.mt_record, options_.mt_dt));
  const double dt = options_.mt_record / static_cast<double>(per_record);
  if (dt > op.stability_bound()) fail(ErrorCode::StabilityViolation, "m-table step exceeds the Euler bound");
  record_dt_ = options_.mt_record;
  const auto records = static_cast<std::size_t>(std::ceil(horizon / record_dt_ - 1e-9));
  std::vector<double> u(g.size(), 1.0), scratch;
  m_rows_.reserve(records + 1);
  m_rows_.push_back(u);
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t s = 0; s < per_record; ++s) op.step(u, dt, scratch);
    m_rows_.push_back(u);
  }
}

std::vector<double> SpineContext::m_grid(double t) const {
  if (t < 0.0 || t > static_cast<double>(m_rows_.size() - 1) * record_dt_ + 1e-9)
    fail(ErrorCode::InvalidArgument, "time outside the m-table");
  double s = t / record_dt_;
  auto k = static_cast<std::size_t>(std::floor(s));
  if (k + 1 >= m_rows_.size()) return m_rows_.back();
  double w = s - static_cast<double>(k);
  if (w < 1e-9) return m_rows_[k];
  if (w > 1.0 - 1e-9) return m_rows_[k + 1];
  std::vector<double> out(m_rows_[k].size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - w) * m_rows_[k][i] + w * m_rows_[k + 1][i];
  return out;
}

double SpineContext::m(double t, double x) const {
  auto row = m_grid(t);
  const Grid& g = grid();
  if (x <= g.x_min()) return row.front();
  if (x >= g.x_max()) return row.back();
  double s = (x - g.x_min()) / g.dx();
  auto k = std::min<std::size_t>(static_cast<std::size_t>(s), g.size() - 2);
  double w = s - static_cast<double>(k);
  return (1.0 - w) * row[k] + w * row[k + 1];
}

double SpineContext::F(double x) const { return std::max(eigen_.F.interpolate(x), floor_); }

bool SpineContext::in_support(double x) const { return eigen_.F.interpolate(x) >= floor_; }

double SpineContext::jump_numerator(double x) const {
  const Grid& g = grid();
  const double radius = params_.kernel.support_radius() + g.dx();
  auto first = static_cast<std::size_t>(std::max(0.0, std::floor((x - radius - g.x_min()) / g.dx())));
  double s = 0.0;
  for (std::size_t j = first; j < g.size() && g.cell_lo(j) <= x + radius; ++j)
    if (eigen_.F[j] > 0.0) s += eigen_.F[j] * params_.kernel.adjoint_cell_weight(x, g.cell_lo(j), g.cell_hi(j));
  return params_.gamma * s;
}

double SpineContext::sample_reversed_target(double x, double u_cell, double u_point) const {
  const Grid& g = grid();
  const double radius = params_.kernel.support_radius() + g.dx();
  auto first = static_cast<std::size_t>(std::max(0.0, std::floor((x - radius - g.x_min()) / g.dx())));
  std::vector<std::pair<std::size_t, double>> cells;
  double total = 0.0;
  for (std::size_t j = first; j < g.size() && g.cell_lo(j) <= x + radius; ++j) {
    double w = eigen_.F[j] * params_.kernel.adjoint_cell_weight(x, g.cell_lo(j), g.cell_hi(j));
    if (w > 0.0) {
      cells.emplace_back(j, w);
      total += w;
    }
  }
  if (cells.empty()) fail(ErrorCode::FloorExit, "no admissible jump target");
  double target = u_cell * total, acc = 0.0;
  std::size_t j = cells.back().first;
  for (auto [cell, w] : cells) {
    acc += w;
    if (target < acc) {
      j = cell;
      break;
    }
  }
  return params_.kernel.sample_adjoint_in_cell(x, g.cell_lo(j), g.cell_hi(j), u_point);
}

TraitPath sample_X(double x, double T, const ModelParams& params, MasterRng& rng, bool adjoint) {
  if (!(T > 0.0)) fail(ErrorCode::InvalidArgument, "path horizon must be positive");
  const double slope = adjoint ? -params.rho : params.rho;
  std::vector<Jump> jumps;
  if (params.gamma > 0.0) {
    double t = 0.0, cur = x, last = 0.0;
    while (true) {
      t += exponential(rng, params.gamma);
      if (t >= T) break;
      double before = cur + slope * (t - last);
      double u = next_uniform(rng);
      cur = adjoint ? params.kernel.sample_adjoint_target(before, u) : params.kernel.sample_target(before, u);
      last = t;
      jumps.push_back({t, cur});
    }
  }
  return TraitPath(0.0, T, x, slope, std::move(jumps));
}

double path_integral(const Polynomial& p, const TraitPath& path, double a, double b) {
  if (!(b > a)) return 0.0;
  double total = 0.0, start = a;
  auto add = [&](double end) {
    if (end > start) total += p.compose_linear(path.value_at(start), path.slope()).integrate(0.0, end - start);
    start = end;
  };
  for (const Jump& j : path.jumps()) {
    if (j.time <= a) continue;
    if (j.time >= b) break;
    add(j.time);
  }
  add(b);
  return total;
}

McEstimate estimate_mt(double x, double t, const ModelParams& params, double lambda, std::size_t n_paths,
                       MasterRng& rng) {
  if (!(t >= 0.0) || n_paths == 0) fail(ErrorCode::InvalidArgument, "estimate_mt needs t >= 0 and paths > 0");
  if (t == 0.0) return {1.0, 0.0};
  const Polynomial h = params.growth();
  // Welford updates.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < n_paths; ++k) {
    TraitPath path = sample_X(x, t, params, rng);
    double w = std::exp(path_integral(h, path, 0.0, t) - lambda * t);
    double d = w - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (w - mean);
  }
  const double n = static_cast<double>(n_paths);
  double var = n > 1.0 ? m2 / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

double ForwardBatch::acceptance_rate() const {
  return trials ? static_cast<double>(accepted) / static_cast<double>(trials) : 0.0;
}

double ForwardBatch::acceptance_se() const {
  if (!trials) return 0.0;
  double p = acceptance_rate();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

ForwardBatch sample_spine_forward(const SpineInit& init, double T, const SpineContext& ctx, MasterRng& rng,
                                  std::size_t trials, std::size_t target_accepted) {
  if (!(T > 0.0)) fail(ErrorCode::InvalidArgument, "spine horizon must be positive");
  if (trials == 0 && target_accepted == 0) fail(ErrorCode::InvalidArgument, "nothing to sample");
  const Polynomial h = ctx.params().growth();
  const double shift = (ctx.lambda() + ctx.killing_constant()) * T;
  const double floor = ctx.options().acceptance_floor;
  const auto check_every = static_cast<std::size_t>(std::ceil(100.0 / floor));
  ForwardBatch batch;
  while ((trials == 0 || batch.trials < trials) && (target_accepted == 0 || batch.accepted < target_accepted)) {
    double x = init.point ? *init.point : ctx.eigen().F.inverse_cdf(next_uniform(rng));
    TraitPath path = sample_X(x, T, ctx.params(), rng);
    double log_survival = path_integral(h, path, 0.0, T) - shift;
    ++batch.trials;
    if (std::log(next_uniform(rng)) < log_survival) {
      ++batch.accepted;
      batch.paths.push_back(std::move(path));
    }
    if (batch.trials % check_every == 0 && batch.acceptance_rate() < floor)
      fail(ErrorCode::AcceptanceTooLow, "acceptance rate below " + std::to_string(floor));
  }
  if (batch.acceptance_rate() < floor)
    fail(ErrorCode::AcceptanceTooLow, "acceptance rate below " + std::to_string(floor));
  return batch;
}

std::optional<TraitPath> sample_reversed_from(double x, double T, const SpineContext& ctx, MasterRng& rng) {
  if (!(T > 0.0)) fail(ErrorCode::InvalidArgument, "reversed horizon must be positive");
  if (!ctx.in_support(x)) return std::nullopt;
  const ModelParams& p = ctx.params();
  const double slope = -p.rho;
  const Grid& g = ctx.grid();
  const double variation = p.kernel.adjoint_weight_variation();
  double F_max = 0.0;
  for (double v : ctx.eigen().F.values()) F_max = std::max(F_max, v);
  std::vector<Jump> jumps;
  double t = 0.0, cur = x;
  if (p.gamma > 0.0) {
    while (t < T) {
      double window = std::min(ctx.options().lookahead, T - t);
      double end = cur + slope * window;
      double lo = std::min(cur, end), hi = std::max(cur, end);
      // Bound kappa over the trait interval swept during the window.
      double numer = std::max(ctx.jump_numerator(lo), ctx.jump_numerator(hi)) + p.gamma * F_max * variation * (hi - lo);
      double F_min = std::min(ctx.F(lo), ctx.F(hi));
      for (std::size_t i = g.nearest(lo); i < g.size() && g.x(i) <= hi; ++i)
        if (g.x(i) >= lo) F_min = std::min(F_min, ctx.F(g.x(i)));
      double bound = numer / F_min * (1.0 + 1e-9);
      double s = t + exponential(rng, bound);
      double u = next_uniform(rng);
      if (s >= t + window) {
        cur = end;
        t += window;
        if (!ctx.in_support(cur)) return std::nullopt;
        continue;
      }
      cur += slope * (s - t);
      t = s;
      if (!ctx.in_support(cur)) return std::nullopt;
      if (u * bound < ctx.kappa(cur)) {
        double u_cell = next_uniform(rng), u_point = next_uniform(rng);
        cur = ctx.sample_reversed_target(cur, u_cell, u_point);
        jumps.push_back({t, cur});
        if (!ctx.in_support(cur)) return std::nullopt;
      }
    }
  } else if (!ctx.in_support(x + slope * T)) {
    return std::nullopt;
  }
  return TraitPath(0.0, T, x, slope, std::move(jumps));
}

ReversedBatch sample_reversed(double T, const SpineContext& ctx, MasterRng& rng, std::size_t n_paths) {
  ReversedBatch batch;
  const std::size_t max_attempts = n_paths + n_paths / 10 + 100;
  while (batch.paths.size() < n_paths) {
    if (batch.attempts >= max_attempts) break;
    ++batch.attempts;
    double x = ctx.eigen().F.inverse_cdf(next_uniform(rng));
    if (auto path = sample_reversed_from(x, T, ctx, rng)) {
      batch.paths.push_back(std::move(*path));
    } else {
      ++batch.floor_exits;
    }
  }
  if (static_cast<double>(batch.floor_exits) > ctx.options().floor_exit_max * static_cast<double>(batch.attempts))
    fail(ErrorCode::FloorExit, std::to_string(batch.floor_exits) + " of " + std::to_string(batch.attempts) +
                                   " reversed paths left the support of F");
  return batch;
}

}  // namespace ancestral
