#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ancestral {

/// Real polynomial with coefficients in ascending order of degree.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<double> coefficients);

  static Polynomial constant(double value) { return Polynomial({value}); }

  double operator()(double x) const noexcept;

  int degree() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<double>& coefficients() const noexcept { return coeffs_; }
  double leading() const noexcept { return coeffs_.back(); }

  Polynomial derivative() const;
  /// p(offset + scale * s) as a polynomial in s.
  Polynomial compose_linear(double offset, double scale) const;
  /// Exact integral of p over [a, b].
  double integrate(double a, double b) const;
  /// Rigorous upper bound of p on [lo, hi] from the Taylor expansion at the midpoint.
  double upper_bound(double lo, double hi) const;
  /// Real roots, ascending.
  std::vector<double> real_roots() const;
  /// Exact extrema on a closed interval (endpoints plus interior critical points).
  double min_on(double lo, double hi) const;
  double max_on(double lo, double hi) const;

  friend Polynomial operator-(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator+(const Polynomial& a, const Polynomial& b);

 private:
  void trim();
  std::vector<double> coeffs_{0.0};
};

/// Uniform grid on [x_min, x_max]. Node i is the centre of a cell of width dx,
/// and quadrature is the midpoint rule: sum_i f_i * dx.
class Grid {
 public:
  Grid(double x_min, double x_max, std::size_t n);

  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  std::size_t size() const noexcept { return n_; }
  double dx() const noexcept { return dx_; }
  double x(std::size_t i) const noexcept { return x_min_ + static_cast<double>(i) * dx_; }
  double cell_lo(std::size_t i) const noexcept { return x(i) - 0.5 * dx_; }
  double cell_hi(std::size_t i) const noexcept { return x(i) + 0.5 * dx_; }
  /// Lower and upper edges of the union of all cells.
  double lo_edge() const noexcept { return x_min_ - 0.5 * dx_; }
  double hi_edge() const noexcept { return x_max_ + 0.5 * dx_; }
  /// Index of the node nearest to x, clamped to the grid.
  std::size_t nearest(double x) const noexcept;
  /// True when node i lies in the central half of [x_min, x_max].
  bool in_inner_half(std::size_t i) const noexcept;
  std::vector<double> nodes() const;

  double quadrature(std::span<const double> values) const;
  double inner(std::span<const double> f, std::span<const double> g) const;
  double l1(std::span<const double> values) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  double x_min_;
  double x_max_;
  std::size_t n_;
  double dx_;
};

/// Nonnegative density sampled at grid nodes.
class DensityField {
 public:
  DensityField(Grid grid, std::vector<double> values);

  const Grid& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double mass() const { return grid_.quadrature(values_); }
  /// Piecewise-linear interpolation between nodes, zero outside the grid.
  double interpolate(double x) const noexcept;
  /// Inverse CDF of the piecewise-constant-per-cell normalisation of this field.
  double inverse_cdf(double u) const;
  DensityField scaled(double factor) const;

 private:
  Grid grid_;
  std::vector<double> values_;
  std::vector<double> cdf_;  // cumulative cell masses, cdf_[0] = 0
};

struct MinorizationCertificate {
  double kappa0;   // density lower bound
  double epsilon;  // half-width of the window on which it holds
};

struct GaussianConvolution {
  double sigma;
};

struct UniformWindow {
  double epsilon;
};

struct Tabulated {
  Grid grid;
  /// Row-major n x n densities: values[i * n + j] = m(x_i, y_j).
  std::vector<double> values;
};

/// Probability kernel m(x, y) dy describing where a jump from x lands.
class MutationKernel {
 public:
  using Variant = std::variant<GaussianConvolution, UniformWindow, Tabulated>;

  explicit MutationKernel(Variant variant,
                          std::optional<MinorizationCertificate> certificate = std::nullopt);

  static MutationKernel gaussian(double sigma,
                                 std::optional<MinorizationCertificate> certificate = std::nullopt);
  /// Carries the exact certificate (1 / (2 epsilon), epsilon).
  static MutationKernel uniform(double epsilon);
  static MutationKernel tabulated(Grid grid, std::vector<double> values,
                                  std::optional<MinorizationCertificate> certificate = std::nullopt);
  /// Reads a CSV with header and columns x, y, density on a uniform square lattice.
  static MutationKernel from_csv(const std::string& path,
                                 std::optional<MinorizationCertificate> certificate = std::nullopt);

  const Variant& variant() const noexcept { return variant_; }
  const std::optional<MinorizationCertificate>& certificate() const noexcept { return certificate_; }
  std::string name() const;

  /// m(x, y).
  double density(double x, double y) const;
  /// Integral of m(x, y) dy over y in [lo, hi].
  double cell_weight(double x, double lo, double hi) const;
  /// Integral of m(y, x) dy over y in [lo, hi].
  double adjoint_cell_weight(double x, double lo, double hi) const;
  /// Draw y ~ m(x, .) from one uniform.
  double sample_target(double x, double u) const;
  /// Draw y ~ m(., x) (normalised in y) from one uniform.
  double sample_adjoint_target(double x, double u) const;
  /// Draw y in [lo, hi] with density proportional to m(y, x).
  double sample_adjoint_in_cell(double x, double lo, double hi, double u) const;
  /// Distance beyond which m(x, .) is numerically zero.
  double support_radius() const;
  /// Bound on sum over cells of |d/dx adjoint_cell_weight(x, cell)|.
  double adjoint_weight_variation() const;
  bool is_even_convolution() const noexcept;

 private:
  Variant variant_;
  std::optional<MinorizationCertificate> certificate_;
};

/// Model constants. Rates are polynomials: constant birth and polynomial death
/// cover the supported family; h = b - d.
struct ModelParams {
  Polynomial birth;
  Polynomial death;
  double gamma = 0.0;
  double rho = 0.0;
  MutationKernel kernel = MutationKernel::uniform(0.5);
  int K = 1;
  int q = 1;
  /// Upper bound of h; computed from the rates when left unset.
  std::optional<double> c;

  Polynomial growth() const { return birth - death; }
  double growth_bound() const;
};

double growth_rate(const ModelParams& params, double x);
double h_lambda(const ModelParams& params, double lambda, double x);

/// The limiting stationary state: F has mass lambda and L*F + hF = lambda F.
struct EigenPair {
  DensityField F;
  double lambda;
};

struct KernelReport {
  double max_row_deviation = 0.0;
  double max_column_deviation = 0.0;
  double max_leak = 0.0;
  std::optional<bool> minorization_holds;
  double moment_2q = 0.0;
};

struct KernelTolerances {
  double mass = 1e-3;
  double leak = 1e-3;
};

/// Row/column masses, boundary leak, minorization and the 2q-th jump moment
/// over source points in the inner half of the grid.
KernelReport validate_kernel(const MutationKernel& kernel, const Grid& grid, int q = 1,
                             KernelTolerances tol = {});

struct GrowthReport {
  double h_at_zero;
  double c;            // sup of h over the real line
  double h_at_x_min;
  double h_at_x_max;
  int largest_q;       // largest integer q with h(x) <= -|x|^q eventually (0 if none)
  double x0;           // threshold for largest_q
};

/// Largest integer q >= 1 (up to max_q) such that h(x) <= -|x|^q for |x| >= x0;
/// returns {0, inf} when none exists.
std::pair<int, double> growth_decay_exponent(const Polynomial& h, int max_q = 16);

/// Checks the rate assumptions for the parametric family and the configured q.
GrowthReport validate_growth(const ModelParams& params, const Grid& grid);

}  // namespace ancestral
