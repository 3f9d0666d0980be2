#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "ancestral/model.hpp"

namespace ancestral {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Which { L, Lstar };
enum class Semigroup { Phat, PhatStar };

/// Discretised generator split into its jump and transport parts.
///
/// Jump weights W_ij = integral of m(x_i, .) over cell j; mass falling outside
/// the grid is added to W_ii, so rows sum to one (the largest such mass is kept
/// in `max_leak`). The L jump block
/// is gamma (W - I); the Lstar jump block is its exact transpose. Transport is
/// first-order upwind along +rho for L and -rho for Lstar, with zero gradient at
/// the outflow end for L and zero inflow for Lstar.
struct GeneratorMatrix {
  Grid grid;
  Which which;
  SparseMatrix jump;
  SparseMatrix transport;
  double max_leak = 0.0;

  SparseMatrix full() const { return jump + transport; }
  std::vector<double> apply(std::span<const double> f) const;
};

GeneratorMatrix generator_matrix(const ModelParams& params, const Grid& grid, Which which);

/// Row-major CSV of the full matrix with a leading comment line describing the grid.
void write_matrix_csv(const GeneratorMatrix& matrix, std::ostream& out);

/// <Lf, g> - <f, L*g> under grid quadrature.
double duality_residual(std::span<const double> f, std::span<const double> g, const ModelParams& params,
                        const Grid& grid);
double duality_residual(const GeneratorMatrix& L, const GeneratorMatrix& Lstar, std::span<const double> f,
                        std::span<const double> g);

/// Largest explicit Euler step allowed: 0.9 / (gamma + max|h - lambda| + |rho| / dx).
double stability_bound(const ModelParams& params, const Grid& grid, double lambda);

/// Explicit Euler evolution of du/dt = A u + (h - lambda) u with A = L or L*.
class FeynmanKac {
 public:
  FeynmanKac(const ModelParams& params, const Grid& grid, double lambda, Semigroup which);

  const Grid& grid() const noexcept { return grid_; }
  double stability_bound() const noexcept { return bound_; }
  /// Generator plus the multiplicative h - lambda term.
  const SparseMatrix& matrix() const noexcept { return matrix_; }

  /// ceil(t / dt) equal steps. Throws StabilityViolation when dt exceeds the bound.
  std::vector<double> propagate(std::vector<double> u, double t, double dt) const;
  /// One step of size dt, no bound check.
  void step(std::vector<double>& u, double dt, std::vector<double>& scratch) const;

 private:
  Grid grid_;
  SparseMatrix matrix_;
  double bound_;
};

std::size_t euler_steps(double t, double dt);

std::vector<double> fk_propagate(std::span<const double> f, double t, const ModelParams& params, const Grid& grid,
                                 double lambda, Semigroup which, double dt);

/// <Phat_t f, g> - <f, PhatStar_t g> with the same step sequence on both sides.
double fk_duality_residual(std::span<const double> f, std::span<const double> g, double t,
                           const ModelParams& params, const Grid& grid, double lambda, double dt);

}  // namespace ancestral
