#include "ancestral/pde.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Dense>

#include "ancestral/error.hpp"

namespace ancestral {

NonlinearSolver::NonlinearSolver(const ModelParams& params, const Grid& grid)
    : grid_(grid), gamma_(params.gamma), transport_rate_(std::abs(params.rho) / grid.dx()) {
  linear_ = generator_matrix(params, grid, Which::Lstar).full();
  h_.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    h_[i] = growth_rate(params, grid.x(i));
    auto k = static_cast<Eigen::Index>(i);
    linear_.coeffRef(k, k) += h_[i];
  }
  linear_.makeCompressed();
}

double NonlinearSolver::stability_bound(double mass) const {
  double hmax = 0.0;
  for (double v : h_) hmax = std::max(hmax, std::abs(v - mass));
  double rate = gamma_ + hmax + transport_rate_;
  return rate > 0.0 ? 0.9 / rate : std::numeric_limits<double>::infinity();
}

std::vector<double> NonlinearSolver::linear_part(std::span<const double> f) const {
  Eigen::Map<const Eigen::VectorXd> v(f.data(), static_cast<Eigen::Index>(f.size()));
  Eigen::VectorXd r = linear_ * v;
  return {r.data(), r.data() + r.size()};
}

DensityField NonlinearSolver::step(const DensityField& f, double dt, double* clipped) const {
  if (!(f.grid() == grid_)) fail(ErrorCode::InvalidArgument, "density lives on a different grid");
  const double mass = f.mass();
  if (dt > stability_bound(mass)) fail(ErrorCode::StabilityViolation, "dt exceeds the explicit Euler bound");
  const auto& v = f.values();
  auto Af = linear_part(v);
  std::vector<double> next(v.size());
  double cut = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double u = v[i] + dt * (Af[i] - mass * v[i]);
    if (u < 0.0) {
      cut -= u;
      u = 0.0;
    }
    if (!std::isfinite(u)) fail(ErrorCode::Divergence, "non-finite density value");
    next[i] = u;
  }
  if (clipped) *clipped += cut * grid_.dx();
  return DensityField(grid_, std::move(next));
}

DensityField step_nonlinear(const DensityField& f, double dt, const ModelParams& params) {
  return NonlinearSolver(params, f.grid()).step(f, dt);
}

PdeTrajectory evolve_nonlinear(const DensityField& f0, double T, const ModelParams& params, double dt,
                               EvolveOptions options) {
  NonlinearSolver solver(params, f0.grid());
  const std::size_t steps = euler_steps(T, dt);
  const double h = steps ? T / static_cast<double>(steps) : 0.0;
  PdeTrajectory traj;
  traj.times.push_back(0.0);
  traj.fields.push_back(f0);
  traj.masses.push_back(f0.mass());
  DensityField f = f0;
  double mass = f0.mass();
  for (std::size_t s = 1; s <= steps; ++s) {
    double growth = f.grid().inner(f.values(), solver.h());
    DensityField next = solver.step(f, h, &traj.clipped_mass);
    double next_mass = next.mass();
    if (!(next_mass <= options.mass_cap)) fail(ErrorCode::Divergence, "mass exceeded the configured cap");
    traj.step_times.push_back(static_cast<double>(s) * h);
    traj.step_masses.push_back(next_mass);
    traj.mass_residuals.push_back((next_mass - mass) / h - (growth - mass * mass));
    f = std::move(next);
    mass = next_mass;
    bool record = s == steps || (options.record_every && s % options.record_every == 0);
    if (record) {
      traj.times.push_back(static_cast<double>(s) * h);
      traj.fields.push_back(f);
      traj.masses.push_back(mass);
    }
  }
  return traj;
}

double eigen_residual(const ModelParams& params, const EigenPair& eigen) {
  FeynmanKac op(params, eigen.F.grid(), eigen.lambda, Semigroup::PhatStar);
  const auto& F = eigen.F.values();
  Eigen::Map<const Eigen::VectorXd> v(F.data(), static_cast<Eigen::Index>(F.size()));
  Eigen::VectorXd r = op.matrix() * v;
  return eigen.F.grid().l1({r.data(), static_cast<std::size_t>(r.size())});
}

StationaryResult solve_stationary(const ModelParams& params, const Grid& grid, StationaryOptions options) {
  FeynmanKac op(params, grid, 0.0, Semigroup::PhatStar);
  double dt = options.dt > 0.0 ? options.dt : 0.5 * op.stability_bound();
  if (dt > op.stability_bound()) fail(ErrorCode::StabilityViolation, "dt exceeds the explicit Euler bound");
  const std::size_t per_macro = std::max<std::size_t>(1, euler_steps(options.macro_interval, dt));
  dt = options.macro_interval / static_cast<double>(per_macro);

  std::vector<double> v(grid.size(), 1.0 / (grid.dx() * static_cast<double>(grid.size())));
  std::vector<double> w, scratch;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    w = v;
    for (std::size_t s = 0; s < per_macro; ++s) op.step(w, dt, scratch);
    double mass = grid.quadrature(w);
    if (!(mass > 0.0) || !std::isfinite(mass)) fail(ErrorCode::NoConvergence, "iterate lost positivity");
    // Per-step growth factor of the Euler map is 1 + dt * lambda on the eigenvector.
    double next_lambda = (std::pow(mass, 1.0 / static_cast<double>(per_macro)) - 1.0) / dt;
    double diff = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = std::max(0.0, w[i] / mass);
      diff += std::abs(w[i] - v[i]);
    }
    diff *= grid.dx();
    bool lambda_settled = std::abs(next_lambda - lambda) <= options.tol;
    v.swap(w);
    lambda = next_lambda;
    if (diff <= options.tol && lambda_settled) {
      if (!(lambda > 0.0))
        fail(ErrorCode::NonPositiveLambda, "dominant eigenvalue is " + std::to_string(lambda));
      EigenPair pair{DensityField(grid, v).scaled(lambda), lambda};
      double residual = eigen_residual(params, pair);
      return {std::move(pair), residual, it};
    }
  }
  fail(ErrorCode::NoConvergence, "power iteration did not converge within the iteration cap");
}

EigenPair dense_eigen_oracle(const ModelParams& params, const Grid& grid) {
  if (grid.size() > 1000) fail(ErrorCode::InvalidArgument, "dense oracle limited to n <= 1000");
  FeynmanKac op(params, grid, 0.0, Semigroup::PhatStar);
  Eigen::MatrixXd A(op.matrix());
  Eigen::EigenSolver<Eigen::MatrixXd> solver(A, true);
  if (solver.info() != Eigen::Success) fail(ErrorCode::NoConvergence, "dense eigensolver failed");
  const auto& values = solver.eigenvalues();
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k)
    if (values[k].real() > values[best].real()) best = k;
  const std::complex<double> mu = values[best];
  if (std::abs(mu.imag()) > 1e-8 * std::max(1.0, std::abs(mu.real())))
    fail(ErrorCode::ComplexDominant, "dominant eigenvalue has imaginary part " + std::to_string(mu.imag()));
  const double lambda = mu.real();
  if (!(lambda > 0.0)) fail(ErrorCode::NonPositiveLambda, "dominant eigenvalue is " + std::to_string(lambda));
  Eigen::VectorXd vec = solver.eigenvectors().col(best).real();
  if (vec.sum() < 0.0) vec = -vec;
  std::vector<double> F(grid.size());
  for (std::size_t i = 0; i < F.size(); ++i) F[i] = std::max(0.0, vec[static_cast<Eigen::Index>(i)]);
  double mass = grid.quadrature(F);
  for (double& x : F) x *= lambda / mass;
  return {DensityField(grid, std::move(F)), lambda};
}

LambdaCertificate lambda_sufficient_check(const ModelParams& params, double x1) {
  const auto& cert = params.kernel.certificate();
  if (!cert) fail(ErrorCode::MissingCertificate, "kernel has no minorization certificate");
  if (!(cert->epsilon > 0.0 && cert->epsilon < x1))
    fail(ErrorCode::InvalidArgument, "certificate epsilon must lie in (0, x1)");
  LambdaCertificate c{};
  c.inf_h = params.growth().min_on(-x1, x1);
  c.gamma = params.gamma;
  c.lhs = params.gamma * cert->kappa0 * std::pow(cert->epsilon, 3);
  c.rhs = 12.0 * std::abs(params.rho) * x1;
  c.holds = c.inf_h > c.gamma && c.lhs >= c.rhs;
  return c;
}

MomentReport moment_2q(const DensityField& F, int q) {
  if (q < 1) fail(ErrorCode::InvalidArgument, "q must be >= 1");
  const Grid& g = F.grid();
  const double centre = 0.5 * (g.x_min() + g.x_max());
  const double inner = 0.4 * (g.x_max() - g.x_min());
  double total = 0.0, outer = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double term = std::pow(g.x(i), 2 * q) * F[i] * g.dx();
    total += term;
    if (std::abs(g.x(i) - centre) > inner) outer += term;
  }
  return {total, total > 0.0 ? outer / total : 0.0};
}

}  // namespace ancestral
