#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ancestral/model.hpp"
#include "ancestral/operators.hpp"
#include "ancestral/rng.hpp"
#include "ancestral/trait_path.hpp"

namespace ancestral {

struct SpineOptions {
  /// Euler step of the m-table.
  double mt_dt = 1e-3;
  /// Spacing of stored m-table rows; values in between are interpolated linearly in time.
  double mt_record = 0.01;
  /// F floor relative to max F.
  double floor_rel = 1e-8;
  /// Killing constant C = max(c - lambda, 0) + margin.
  double killing_margin = 0.1;
  double acceptance_floor = 1e-4;
  /// Largest tolerated share of reversed paths lost to floor exits.
  double floor_exit_max = 0.01;
  /// Time window over which the reversed-process jump bound is held.
  double lookahead = 1.0;
};

/// Stationary pair plus the expected-mass table m_t(x) = Phat_t 1 on [0, horizon].
class SpineContext {
 public:
  SpineContext(ModelParams params, EigenPair eigen, double horizon, SpineOptions options = {});

  const ModelParams& params() const noexcept { return params_; }
  const EigenPair& eigen() const noexcept { return eigen_; }
  const Grid& grid() const noexcept { return eigen_.F.grid(); }
  double lambda() const noexcept { return eigen_.lambda; }
  double horizon() const noexcept { return horizon_; }
  const SpineOptions& options() const noexcept { return options_; }
  double killing_constant() const noexcept { return C_; }
  double floor() const noexcept { return floor_; }

  /// m_t on the grid nodes.
  std::vector<double> m_grid(double t) const;
  /// m_t(x), linear in x between nodes.
  double m(double t, double x) const;

  /// F interpolated between nodes, floored at the F floor.
  double F(double x) const;
  /// True where the unfloored interpolation of F is at least the floor.
  bool in_support(double x) const;
  /// gamma * sum_j F_j * integral over cell j of m(y, x) dy.
  double jump_numerator(double x) const;
  /// Jump intensity of the reversed process.
  double kappa(double x) const { return jump_numerator(x) / F(x); }
  /// Target of a reversed-process jump from x: cell j with probability
  /// proportional to F_j * A_j(x), then a point in the cell with density
  /// proportional to m(y, x).
  double sample_reversed_target(double x, double u_cell, double u_point) const;

 private:
  ModelParams params_;
  EigenPair eigen_;
  double horizon_;
  SpineOptions options_;
  double C_;
  double floor_;
  double F_max_;
  double record_dt_;
  std::vector<std::vector<double>> m_rows_;
};

/// Path of X (drift +rho, jumps from m(x, .)) or X* (drift -rho, jumps from m(., x)) on [0, T].
TraitPath sample_X(double x, double T, const ModelParams& params, MasterRng& rng, bool adjoint = false);

/// Exact integral of p along the path over [a, b].
double path_integral(const Polynomial& p, const TraitPath& path, double a, double b);

struct McEstimate {
  double estimate;
  double std_error;
};

/// Monte Carlo estimate of E_x[exp(int_0^t h^lambda(X_s) ds)].
McEstimate estimate_mt(double x, double t, const ModelParams& params, double lambda, std::size_t n_paths,
                       MasterRng& rng);

/// Start of the forward spine: a fixed trait, or the biased law m_T F / lambda
/// (realised by starting X from F / lambda and letting the killing do the bias).
struct SpineInit {
  std::optional<double> point;

  static SpineInit at(double x) { return {x}; }
  static SpineInit biased() { return {}; }
};

struct ForwardBatch {
  std::vector<TraitPath> paths;
  std::size_t trials = 0;
  std::size_t accepted = 0;

  double acceptance_rate() const;
  double acceptance_se() const;
};

/// Killing construction: X is killed at rate C - h^lambda and survivors to T are
/// returned. Runs `trials` proposals, or until `target_accepted` paths if nonzero.
ForwardBatch sample_spine_forward(const SpineInit& init, double T, const SpineContext& ctx, MasterRng& rng,
                                  std::size_t trials, std::size_t target_accepted = 0);

/// Reversed process from x on [0, T]: drift -rho, jump intensity kappa, targets
/// biased by F. Returns nothing when the path leaves {F >= floor}.
std::optional<TraitPath> sample_reversed_from(double x, double T, const SpineContext& ctx, MasterRng& rng);

struct ReversedBatch {
  std::vector<TraitPath> paths;
  std::size_t attempts = 0;
  std::size_t floor_exits = 0;
};

/// n paths of the reversed process started from F / lambda.
ReversedBatch sample_reversed(double T, const SpineContext& ctx, MasterRng& rng, std::size_t n_paths);

}  // namespace ancestral
