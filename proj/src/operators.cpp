#include "ancestral/operators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "ancestral/error.hpp"

namespace ancestral {

namespace {

using Triplet = Eigen::Triplet<double>;

// Cell weights; W(i, j) is the probability that a jump from node i lands in
// cell j. Mass that would leave the grid stays on the diagonal.
SparseMatrix jump_weights(const MutationKernel& kernel, const Grid& grid, double& max_leak) {
  const std::size_t n = grid.size();
  const double radius = kernel.support_radius() + grid.dx();
  std::vector<Triplet> triplets;
  max_leak = 0.0;
  std::vector<std::pair<std::size_t, double>> row;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.x(i);
    row.clear();
    double total = 0.0;
    auto first = static_cast<std::size_t>(std::max(0.0, std::floor((x - radius - grid.x_min()) / grid.dx())));
    for (std::size_t j = first; j < n; ++j) {
      if (grid.cell_lo(j) > x + radius) break;
      double w = kernel.cell_weight(x, grid.cell_lo(j), grid.cell_hi(j));
      if (w > 0.0) {
        row.emplace_back(j, w);
        total += w;
      }
    }
    max_leak = std::max(max_leak, 1.0 - total);
    for (auto [j, w] : row) triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), w);
    if (total < 1.0) triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 - total);
  }
  SparseMatrix W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  W.setFromTriplets(triplets.begin(), triplets.end());
  return W;
}

SparseMatrix upwind(const Grid& grid, double velocity) {
  const auto n = static_cast<int>(grid.size());
  const double a = std::abs(velocity) / grid.dx();
  std::vector<Triplet> t;
  if (velocity > 0.0) {
    // velocity * f'(x_i) from the downstream neighbour; zero at the last node.
    for (int i = 0; i + 1 < n; ++i) {
      t.emplace_back(i, i, -a);
      t.emplace_back(i, i + 1, a);
    }
  } else if (velocity < 0.0) {
    for (int i = 1; i < n; ++i) {
      t.emplace_back(i, i, -a);
      t.emplace_back(i, i - 1, a);
    }
  }
  SparseMatrix T(n, n);
  T.setFromTriplets(t.begin(), t.end());
  return T;
}

// Conservative upwind for -velocity * g' in flux form with zero inflow.
SparseMatrix upwind_adjoint(const Grid& grid, double velocity) {
  SparseMatrix forward = upwind(grid, velocity);
  SparseMatrix T = SparseMatrix(forward.transpose());
  const auto n = static_cast<int>(grid.size());
  const double a = std::abs(velocity) / grid.dx();
  // The transpose lacks the outflow at the boundary node where L has zero gradient.
  if (velocity > 0.0) T.coeffRef(n - 1, n - 1) = -a;
  if (velocity < 0.0) T.coeffRef(0, 0) = -a;
  T.prune(0.0);
  return T;
}

std::vector<double> multiply(const SparseMatrix& A, std::span<const double> f) {
  Eigen::Map<const Eigen::VectorXd> v(f.data(), static_cast<Eigen::Index>(f.size()));
  Eigen::VectorXd r = A * v;
  return {r.data(), r.data() + r.size()};
}

void check_size(const Grid& grid, std::span<const double> f) {
  if (f.size() != grid.size()) fail(ErrorCode::InvalidArgument, "array size does not match grid");
}

}  // namespace

std::vector<double> GeneratorMatrix::apply(std::span<const double> f) const {
  check_size(grid, f);
  return multiply(full(), f);
}

GeneratorMatrix generator_matrix(const ModelParams& params, const Grid& grid, Which which) {
  double leak = 0.0;
  SparseMatrix W = jump_weights(params.kernel, grid, leak);
  SparseMatrix I(W.rows(), W.cols());
  I.setIdentity();
  SparseMatrix J = params.gamma * (W - I);
  J.prune(0.0);
  GeneratorMatrix g{grid, which, {}, {}, leak};
  if (which == Which::L) {
    g.jump = std::move(J);
    g.transport = upwind(grid, params.rho);
  } else {
    g.jump = SparseMatrix(J.transpose());
    g.transport = upwind_adjoint(grid, params.rho);
  }
  return g;
}

void write_matrix_csv(const GeneratorMatrix& matrix, std::ostream& out) {
  const Grid& grid = matrix.grid;
  char buf[64];
  out << "# which=" << (matrix.which == Which::L ? "L" : "Lstar");
  std::snprintf(buf, sizeof buf, "%.17g", grid.x_min());
  out << " x_min=" << buf;
  std::snprintf(buf, sizeof buf, "%.17g", grid.x_max());
  out << " x_max=" << buf << " n=" << grid.size() << '\n';
  Eigen::MatrixXd dense(matrix.full());
  for (Eigen::Index i = 0; i < dense.rows(); ++i) {
    for (Eigen::Index j = 0; j < dense.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", dense(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

double duality_residual(const GeneratorMatrix& L, const GeneratorMatrix& Lstar, std::span<const double> f,
                        std::span<const double> g) {
  check_size(L.grid, f);
  check_size(L.grid, g);
  auto Lf = L.apply(f);
  auto Lg = Lstar.apply(g);
  return L.grid.inner(Lf, g) - L.grid.inner(f, Lg);
}

double duality_residual(std::span<const double> f, std::span<const double> g, const ModelParams& params,
                        const Grid& grid) {
  return duality_residual(generator_matrix(params, grid, Which::L), generator_matrix(params, grid, Which::Lstar), f,
                          g);
}

double stability_bound(const ModelParams& params, const Grid& grid, double lambda) {
  double hmax = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    hmax = std::max(hmax, std::abs(h_lambda(params, lambda, grid.x(i))));
  double rate = params.gamma + hmax + std::abs(params.rho) / grid.dx();
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return 0.9 / rate;
}

FeynmanKac::FeynmanKac(const ModelParams& params, const Grid& grid, double lambda, Semigroup which)
    : grid_(grid), bound_(ancestral::stability_bound(params, grid, lambda)) {
  matrix_ = generator_matrix(params, grid, which == Semigroup::Phat ? Which::L : Which::Lstar).full();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto k = static_cast<Eigen::Index>(i);
    matrix_.coeffRef(k, k) += h_lambda(params, lambda, grid.x(i));
  }
  matrix_.makeCompressed();
}

void FeynmanKac::step(std::vector<double>& u, double dt, std::vector<double>& scratch) const {
  scratch.resize(u.size());
  Eigen::Map<const Eigen::VectorXd> in(u.data(), static_cast<Eigen::Index>(u.size()));
  Eigen::Map<Eigen::VectorXd> out(scratch.data(), static_cast<Eigen::Index>(scratch.size()));
  out.noalias() = matrix_ * in;
  for (std::size_t i = 0; i < u.size(); ++i) u[i] += dt * scratch[i];
}

std::size_t euler_steps(double t, double dt) {
  if (!(t >= 0.0)) fail(ErrorCode::InvalidArgument, "time must be nonnegative");
  if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "time step must be positive");
  if (t == 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(t / dt * (1.0 - 1e-12)));
}

std::vector<double> FeynmanKac::propagate(std::vector<double> u, double t, double dt) const {
  check_size(grid_, u);
  if (dt > bound_) fail(ErrorCode::StabilityViolation, "dt exceeds the explicit Euler bound");
  std::size_t steps = euler_steps(t, dt);
  if (steps == 0) return u;
  double h = t / static_cast<double>(steps);
  std::vector<double> scratch;
  for (std::size_t s = 0; s < steps; ++s) step(u, h, scratch);
  return u;
}

std::vector<double> fk_propagate(std::span<const double> f, double t, const ModelParams& params, const Grid& grid,
                                 double lambda, Semigroup which, double dt) {
  return FeynmanKac(params, grid, lambda, which).propagate({f.begin(), f.end()}, t, dt);
}

double fk_duality_residual(std::span<const double> f, std::span<const double> g, double t,
                           const ModelParams& params, const Grid& grid, double lambda, double dt) {
  auto pf = fk_propagate(f, t, params, grid, lambda, Semigroup::Phat, dt);
  auto pg = fk_propagate(g, t, params, grid, lambda, Semigroup::PhatStar, dt);
  return grid.inner(pf, g) - grid.inner(f, pg);
}

}  // namespace ancestral
