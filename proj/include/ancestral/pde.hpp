#pragma once

#include <cstddef>
#include <vector>

#include "ancestral/model.hpp"
#include "ancestral/operators.hpp"

namespace ancestral {

/// Explicit Euler for df/dt = L*f + (h - mass(f)) f.
class NonlinearSolver {
 public:
  NonlinearSolver(const ModelParams& params, const Grid& grid);

  const Grid& grid() const noexcept { return grid_; }
  /// Step bound at a given total mass.
  double stability_bound(double mass) const;
  /// One step; negative values are set to zero and their mass added to `clipped`.
  DensityField step(const DensityField& f, double dt, double* clipped = nullptr) const;
  /// L*f + h f.
  std::vector<double> linear_part(std::span<const double> f) const;
  const std::vector<double>& h() const noexcept { return h_; }

 private:
  Grid grid_;
  double gamma_;
  double transport_rate_;
  SparseMatrix linear_;  // L* + diag(h)
  std::vector<double> h_;
};

DensityField step_nonlinear(const DensityField& f, double dt, const ModelParams& params);

struct PdeTrajectory {
  /// Recorded states; masses[k] = fields[k].mass().
  std::vector<double> times;
  std::vector<DensityField> fields;
  std::vector<double> masses;
  /// Per-step series: mass after each step and the residual of
  /// d/dt mass - (<f, h> - mass^2) over that step.
  std::vector<double> step_times;
  std::vector<double> step_masses;
  std::vector<double> mass_residuals;
  double clipped_mass = 0.0;
};

struct EvolveOptions {
  double mass_cap = 1e6;
  /// Record every `record_every` steps; the initial and final states are always kept.
  std::size_t record_every = 0;
};

PdeTrajectory evolve_nonlinear(const DensityField& f0, double T, const ModelParams& params, double dt,
                               EvolveOptions options = {});

struct StationaryOptions {
  double tol = 1e-12;
  /// Euler step; 0 picks half the stability bound at lambda = 0.
  double dt = 0.0;
  double macro_interval = 1.0;
  std::size_t max_iterations = 20000;
};

struct StationaryResult {
  EigenPair eigen;
  /// ||L*F + hF - lambda F||_1.
  double residual;
  std::size_t iterations;
};

/// Power iteration of the discrete semigroup of L* + h.
StationaryResult solve_stationary(const ModelParams& params, const Grid& grid, StationaryOptions options = {});

/// Dense eigen-decomposition of L* + h; the eigenvalue with largest real part.
EigenPair dense_eigen_oracle(const ModelParams& params, const Grid& grid);

/// ||L*F + hF - lambda F||_1 on the grid.
double eigen_residual(const ModelParams& params, const EigenPair& eigen);

struct LambdaCertificate {
  bool holds;
  double inf_h;   // inf of h over (-x1, x1)
  double gamma;
  double lhs;     // gamma * kappa0 * epsilon^3
  double rhs;     // 12 * |rho| * x1
};

LambdaCertificate lambda_sufficient_check(const ModelParams& params, double x1);

struct MomentReport {
  double value;
  /// Share of the moment carried by the outer 10% of the grid (5% at each end).
  double outer_fraction;
};

MomentReport moment_2q(const DensityField& F, int q);

}  // namespace ancestral
