#include "ancestral/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <unsupported/Eigen/Polynomials>

#include "ancestral/error.hpp"

namespace ancestral {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

// P(a < Z < b) for a standard normal, accurate in both tails.
double normal_interval(double a, double b) {
  if (b <= a) return 0.0;
  if (a >= 0.0) return normal_upper_tail(a) - normal_upper_tail(b);
  if (b <= 0.0) return normal_upper_tail(-b) - normal_upper_tail(-a);
  return 1.0 - normal_upper_tail(b) - normal_upper_tail(-a);
}

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// A nonnegative piecewise-linear function given by its values at the nodes of
// `grid`, zero outside [x_min, x_max].
struct PiecewiseLinear {
  const Grid& grid;
  std::vector<double> values;

  double at(double y) const {
    if (y < grid.x_min() || y > grid.x_max()) return 0.0;
    double s = (y - grid.x_min()) / grid.dx();
    auto k = std::min<std::size_t>(static_cast<std::size_t>(s), grid.size() - 2);
    double t = s - static_cast<double>(k);
    return (1.0 - t) * values[k] + t * values[k + 1];
  }

  // Breakpoints of the restriction to [lo, hi], including both ends.
  std::vector<double> breakpoints(double lo, double hi) const {
    lo = std::max(lo, grid.x_min());
    hi = std::min(hi, grid.x_max());
    std::vector<double> pts;
    if (hi <= lo) return pts;
    pts.push_back(lo);
    double s = std::ceil((lo - grid.x_min()) / grid.dx());
    for (auto k = static_cast<std::size_t>(std::max(0.0, s)); k < grid.size(); ++k) {
      double y = grid.x(k);
      if (y >= hi) break;
      if (y > lo) pts.push_back(y);
    }
    pts.push_back(hi);
    return pts;
  }

  double integrate(double lo, double hi) const {
    auto pts = breakpoints(lo, hi);
    double total = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k)
      total += 0.5 * (at(pts[k - 1]) + at(pts[k])) * (pts[k] - pts[k - 1]);
    return total;
  }

  // Inverse CDF of the restriction to [lo, hi]; uniform fallback when massless.
  double sample(double lo, double hi, double u) const {
    auto pts = breakpoints(lo, hi);
    if (pts.size() < 2) return std::clamp(0.5 * (lo + hi), grid.x_min(), grid.x_max());
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t k = 1; k < pts.size(); ++k)
      cum[k] = cum[k - 1] + 0.5 * (at(pts[k - 1]) + at(pts[k])) * (pts[k] - pts[k - 1]);
    if (!(cum.back() > 0.0)) return pts.front() + u * (pts.back() - pts.front());
    double target = u * cum.back();
    auto it = std::upper_bound(cum.begin() + 1, cum.end() - 1, target);
    auto k = static_cast<std::size_t>(it - cum.begin());
    double a = pts[k - 1], w = pts[k] - a;
    double va = at(a), vb = at(pts[k]);
    double r = target - cum[k - 1];
    double slope = (vb - va) / w;
    double s;
    if (std::abs(slope) * w < 1e-12 * std::max(va, vb)) {
      s = r / va;
    } else {
      double disc = std::max(0.0, va * va + 2.0 * slope * r);
      s = 2.0 * r / (va + std::sqrt(disc));
    }
    return a + std::clamp(s, 0.0, w);
  }
};

struct TabulatedView {
  const Tabulated& tab;

  std::size_t n() const { return tab.grid.size(); }
  double entry(std::size_t i, std::size_t j) const { return tab.values[i * n() + j]; }

  // Values of y -> m(x, y) at the kernel nodes.
  PiecewiseLinear row(double x) const {
    std::vector<double> v(n(), 0.0);
    if (x >= tab.grid.x_min() && x <= tab.grid.x_max()) {
      double s = (x - tab.grid.x_min()) / tab.grid.dx();
      auto i = std::min<std::size_t>(static_cast<std::size_t>(s), n() - 2);
      double t = s - static_cast<double>(i);
      for (std::size_t j = 0; j < n(); ++j) v[j] = (1.0 - t) * entry(i, j) + t * entry(i + 1, j);
    }
    return {tab.grid, std::move(v)};
  }

  // Values of y -> m(y, x) at the kernel nodes.
  PiecewiseLinear column(double x) const {
    std::vector<double> v(n(), 0.0);
    if (x >= tab.grid.x_min() && x <= tab.grid.x_max()) {
      double s = (x - tab.grid.x_min()) / tab.grid.dx();
      auto j = std::min<std::size_t>(static_cast<std::size_t>(s), n() - 2);
      double t = s - static_cast<double>(j);
      for (std::size_t i = 0; i < n(); ++i) v[i] = (1.0 - t) * entry(i, j) + t * entry(i, j + 1);
    }
    return {tab.grid, std::move(v)};
  }
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double double_factorial(int k) {
  double r = 1.0;
  for (int j = k; j > 1; j -= 2) r *= j;
  return r;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

}  // namespace

// ---------------------------------------------------------------- Polynomial

Polynomial::Polynomial(std::vector<double> coefficients) : coeffs_(std::move(coefficients)) {
  if (coeffs_.empty()) coeffs_.push_back(0.0);
  for (double a : coeffs_)
    if (!std::isfinite(a)) fail(ErrorCode::InvalidArgument, "non-finite polynomial coefficient");
  trim();
}

void Polynomial::trim() {
  while (coeffs_.size() > 1 && coeffs_.back() == 0.0) coeffs_.pop_back();
}

double Polynomial::operator()(double x) const noexcept {
  double r = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) r = r * x + *it;
  return r;
}

Polynomial Polynomial::derivative() const {
  if (coeffs_.size() == 1) return Polynomial{};
  std::vector<double> d(coeffs_.size() - 1);
  for (std::size_t k = 1; k < coeffs_.size(); ++k) d[k - 1] = static_cast<double>(k) * coeffs_[k];
  return Polynomial(std::move(d));
}

Polynomial Polynomial::compose_linear(double offset, double scale) const {
  std::vector<double> r{0.0};
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) {
    std::vector<double> next(r.size() + 1, 0.0);
    for (std::size_t k = 0; k < r.size(); ++k) {
      next[k] += r[k] * offset;
      next[k + 1] += r[k] * scale;
    }
    next[0] += *it;
    r = std::move(next);
  }
  return Polynomial(std::move(r));
}

double Polynomial::integrate(double a, double b) const {
  // Antiderivative differences around the midpoint keep cancellation small.
  double m = 0.5 * (a + b), r = 0.5 * (b - a);
  const std::vector<double> t = compose_linear(m, 1.0).coeffs_;
  double total = 0.0, rp = r;
  for (std::size_t k = 0; k < t.size(); k += 2) {
    total += 2.0 * t[k] * rp / static_cast<double>(k + 1);
    rp *= r * r;
  }
  return total;
}

double Polynomial::upper_bound(double lo, double hi) const {
  double m = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
  const std::vector<double> t = compose_linear(m, 1.0).coeffs_;
  double bound = t[0], rp = 1.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    rp *= r;
    bound += std::abs(t[k]) * rp;
  }
  return bound;
}

std::vector<double> Polynomial::real_roots() const {
  std::vector<double> roots;
  if (degree() < 1) return roots;
  if (degree() == 1) return {-coeffs_[0] / coeffs_[1]};
  Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(coeffs_.data(), static_cast<Eigen::Index>(coeffs_.size()));
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(c);
  const Polynomial dp = derivative();
  for (const auto& z : solver.roots()) {
    if (std::abs(z.imag()) > 1e-7 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 4; ++it) {
      double slope = dp(x);
      if (slope == 0.0) break;
      x -= (*this)(x) / slope;
    }
    roots.push_back(x);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

double Polynomial::min_on(double lo, double hi) const {
  double best = std::min((*this)(lo), (*this)(hi));
  for (double x : derivative().real_roots())
    if (x > lo && x < hi) best = std::min(best, (*this)(x));
  return best;
}

double Polynomial::max_on(double lo, double hi) const {
  double best = std::max((*this)(lo), (*this)(hi));
  for (double x : derivative().real_roots())
    if (x > lo && x < hi) best = std::max(best, (*this)(x));
  return best;
}

Polynomial operator+(const Polynomial& a, const Polynomial& b) {
  std::vector<double> r(std::max(a.coeffs_.size(), b.coeffs_.size()), 0.0);
  for (std::size_t k = 0; k < a.coeffs_.size(); ++k) r[k] += a.coeffs_[k];
  for (std::size_t k = 0; k < b.coeffs_.size(); ++k) r[k] += b.coeffs_[k];
  return Polynomial(std::move(r));
}

Polynomial operator-(const Polynomial& a, const Polynomial& b) {
  std::vector<double> neg(b.coeffs_);
  for (double& v : neg) v = -v;
  return a + Polynomial(std::move(neg));
}

// ---------------------------------------------------------------- Grid

Grid::Grid(double x_min, double x_max, std::size_t n) : x_min_(x_min), x_max_(x_max), n_(n) {
  if (n < 3) fail(ErrorCode::InvalidArgument, "grid needs at least 3 points");
  if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_min < 0.0 && 0.0 < x_max))
    fail(ErrorCode::InvalidArgument, "grid must satisfy x_min < 0 < x_max");
  dx_ = (x_max - x_min) / static_cast<double>(n - 1);
}

std::size_t Grid::nearest(double x) const noexcept {
  double s = std::round((x - x_min_) / dx_);
  if (!(s > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(s), n_ - 1);
}

bool Grid::in_inner_half(std::size_t i) const noexcept {
  double centre = 0.5 * (x_min_ + x_max_);
  return std::abs(x(i) - centre) <= 0.25 * (x_max_ - x_min_) + 1e-12 * dx_;
}

std::vector<double> Grid::nodes() const {
  std::vector<double> v(n_);
  for (std::size_t i = 0; i < n_; ++i) v[i] = x(i);
  return v;
}

double Grid::quadrature(std::span<const double> values) const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * dx_;
}

double Grid::inner(std::span<const double> f, std::span<const double> g) const {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
  return s * dx_;
}

double Grid::l1(std::span<const double> values) const {
  double s = 0.0;
  for (double v : values) s += std::abs(v);
  return s * dx_;
}

// ---------------------------------------------------------------- DensityField

DensityField::DensityField(Grid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) fail(ErrorCode::InvalidArgument, "density size does not match grid");
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidArgument, "density values must be finite and >= 0");
  cdf_.assign(values_.size() + 1, 0.0);
  for (std::size_t i = 0; i < values_.size(); ++i) cdf_[i + 1] = cdf_[i] + values_[i];
}

double DensityField::interpolate(double x) const noexcept {
  if (x < grid_.lo_edge() || x > grid_.hi_edge()) return 0.0;
  if (x <= grid_.x_min()) return values_.front();
  if (x >= grid_.x_max()) return values_.back();
  double s = (x - grid_.x_min()) / grid_.dx();
  auto k = std::min<std::size_t>(static_cast<std::size_t>(s), grid_.size() - 2);
  double t = s - static_cast<double>(k);
  return (1.0 - t) * values_[k] + t * values_[k + 1];
}

double DensityField::inverse_cdf(double u) const {
  double total = cdf_.back();
  if (!(total > 0.0)) fail(ErrorCode::EmptyInitial, "density has zero mass");
  double target = std::clamp(u, 0.0, 1.0) * total;
  auto it = std::upper_bound(cdf_.begin() + 1, cdf_.end(), target);
  if (it == cdf_.end()) --it;
  auto cell = static_cast<std::size_t>(it - cdf_.begin()) - 1;
  while (values_[cell] == 0.0 && cell + 1 < values_.size()) ++cell;
  double frac = values_[cell] > 0.0 ? (target - cdf_[cell]) / values_[cell] : 0.5;
  return grid_.cell_lo(cell) + std::clamp(frac, 0.0, 1.0) * grid_.dx();
}

DensityField DensityField::scaled(double factor) const {
  std::vector<double> v(values_);
  for (double& x : v) x *= factor;
  return DensityField(grid_, std::move(v));
}

// ---------------------------------------------------------------- MutationKernel

MutationKernel::MutationKernel(Variant variant, std::optional<MinorizationCertificate> certificate)
    : variant_(std::move(variant)), certificate_(certificate) {
  std::visit(Overloaded{
                 [](const GaussianConvolution& g) {
                   if (!(g.sigma > 0.0) || !std::isfinite(g.sigma))
                     fail(ErrorCode::InvalidArgument, "gaussian kernel needs sigma > 0");
                 },
                 [](const UniformWindow& u) {
                   if (!(u.epsilon > 0.0) || !std::isfinite(u.epsilon))
                     fail(ErrorCode::InvalidArgument, "uniform kernel needs epsilon > 0");
                 },
                 [](const Tabulated& t) {
                   if (t.values.size() != t.grid.size() * t.grid.size())
                     fail(ErrorCode::InvalidArgument, "tabulated kernel must be n x n");
                   for (double v : t.values)
                     if (!(v >= 0.0) || !std::isfinite(v))
                       fail(ErrorCode::InvalidArgument, "tabulated kernel densities must be >= 0");
                 },
             },
             variant_);
  if (certificate_ && !(certificate_->kappa0 > 0.0 && certificate_->epsilon > 0.0))
    fail(ErrorCode::InvalidArgument, "minorization certificate needs kappa0 > 0 and epsilon > 0");
}

MutationKernel MutationKernel::gaussian(double sigma, std::optional<MinorizationCertificate> certificate) {
  return MutationKernel(GaussianConvolution{sigma}, certificate);
}

MutationKernel MutationKernel::uniform(double epsilon) {
  return MutationKernel(UniformWindow{epsilon}, MinorizationCertificate{1.0 / (2.0 * epsilon), epsilon});
}

MutationKernel MutationKernel::tabulated(Grid grid, std::vector<double> values,
                                         std::optional<MinorizationCertificate> certificate) {
  return MutationKernel(Tabulated{grid, std::move(values)}, certificate);
}

MutationKernel MutationKernel::from_csv(const std::string& path,
                                        std::optional<MinorizationCertificate> certificate) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigInvalid, "cannot open kernel file " + path);
  std::string line;
  std::getline(in, line);  // header
  std::map<std::pair<double, double>, double> entries;
  std::vector<double> xs;
  auto parse = [&](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{}) fail(ErrorCode::ConfigInvalid, "bad number in kernel file " + path);
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::string_view sv(line);
    auto c1 = sv.find(','), c2 = sv.find(',', c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos)
      fail(ErrorCode::ConfigInvalid, "kernel rows must have columns x,y,density");
    double x = parse(sv.substr(0, c1));
    double y = parse(sv.substr(c1 + 1, c2 - c1 - 1));
    double v = parse(sv.substr(c2 + 1));
    entries[{x, y}] = v;
    xs.push_back(x);
    xs.push_back(y);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  if (xs.size() < 3 || entries.size() != xs.size() * xs.size())
    fail(ErrorCode::ConfigInvalid, "kernel file must cover a full square lattice: " + path);
  Grid grid(xs.front(), xs.back(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (std::abs(xs[i] - grid.x(i)) > 1e-9 * grid.dx())
      fail(ErrorCode::ConfigInvalid, "kernel lattice must be uniform: " + path);
  std::vector<double> values(xs.size() * xs.size());
  std::size_t k = 0;
  for (const auto& [key, v] : entries) values[k++] = v;  // map order is row-major in (x, y)
  return tabulated(grid, std::move(values), certificate);
}

std::string MutationKernel::name() const {
  return std::visit(Overloaded{
                        [](const GaussianConvolution&) { return std::string("gaussian"); },
                        [](const UniformWindow&) { return std::string("uniform"); },
                        [](const Tabulated&) { return std::string("tabulated"); },
                    },
                    variant_);
}

bool MutationKernel::is_even_convolution() const noexcept { return !std::holds_alternative<Tabulated>(variant_); }

double MutationKernel::density(double x, double y) const {
  return std::visit(Overloaded{
                        [&](const GaussianConvolution& g) {
                          double z = (y - x) / g.sigma;
                          return std::exp(-0.5 * z * z) / (g.sigma * std::sqrt(2.0 * std::numbers::pi));
                        },
                        [&](const UniformWindow& u) {
                          return std::abs(y - x) < u.epsilon ? 1.0 / (2.0 * u.epsilon) : 0.0;
                        },
                        [&](const Tabulated& t) { return TabulatedView{t}.row(x).at(y); },
                    },
                    variant_);
}

double MutationKernel::cell_weight(double x, double lo, double hi) const {
  return std::visit(Overloaded{
                        [&](const GaussianConvolution& g) {
                          return normal_interval((lo - x) / g.sigma, (hi - x) / g.sigma);
                        },
                        [&](const UniformWindow& u) {
                          return overlap(lo, hi, x - u.epsilon, x + u.epsilon) / (2.0 * u.epsilon);
                        },
                        [&](const Tabulated& t) { return TabulatedView{t}.row(x).integrate(lo, hi); },
                    },
                    variant_);
}

double MutationKernel::adjoint_cell_weight(double x, double lo, double hi) const {
  if (const auto* t = std::get_if<Tabulated>(&variant_)) return TabulatedView{*t}.column(x).integrate(lo, hi);
  return cell_weight(x, lo, hi);
}

double MutationKernel::sample_target(double x, double u) const {
  return std::visit(Overloaded{
                        [&](const GaussianConvolution& g) {
                          return x + g.sigma * boost::math::quantile(boost::math::normal(), u);
                        },
                        [&](const UniformWindow& w) { return x + w.epsilon * (2.0 * u - 1.0); },
                        [&](const Tabulated& t) { return TabulatedView{t}.row(x).sample(-kInf, kInf, u); },
                    },
                    variant_);
}

double MutationKernel::sample_adjoint_target(double x, double u) const {
  if (const auto* t = std::get_if<Tabulated>(&variant_)) return TabulatedView{*t}.column(x).sample(-kInf, kInf, u);
  return sample_target(x, u);
}

double MutationKernel::sample_adjoint_in_cell(double x, double lo, double hi, double u) const {
  return std::visit(
      Overloaded{
          [&](const GaussianConvolution& g) {
            double a = (lo - x) / g.sigma, b = (hi - x) / g.sigma;
            boost::math::normal n;
            double z;
            if (a >= 0.0) {
              double qa = normal_upper_tail(a), qb = normal_upper_tail(b);
              double q = qa - u * (qa - qb);
              if (!(qa > qb)) return lo + u * (hi - lo);
              z = boost::math::quantile(boost::math::complement(n, q));
            } else {
              double pa = normal_upper_tail(-a), pb = normal_upper_tail(-b);
              if (!(pb > pa)) return lo + u * (hi - lo);
              z = boost::math::quantile(n, pa + u * (pb - pa));
            }
            return std::clamp(x + g.sigma * z, lo, hi);
          },
          [&](const UniformWindow& w) {
            double a = std::max(lo, x - w.epsilon), b = std::min(hi, x + w.epsilon);
            if (!(b > a)) return lo + u * (hi - lo);
            return a + u * (b - a);
          },
          [&](const Tabulated& t) { return TabulatedView{t}.column(x).sample(lo, hi, u); },
      },
      variant_);
}

double MutationKernel::support_radius() const {
  return std::visit(Overloaded{
                        [](const GaussianConvolution& g) { return 8.5 * g.sigma; },
                        [](const UniformWindow& u) { return u.epsilon; },
                        [](const Tabulated& t) { return t.grid.x_max() - t.grid.x_min(); },
                    },
                    variant_);
}

double MutationKernel::adjoint_weight_variation() const {
  return std::visit(Overloaded{
                        [](const GaussianConvolution& g) {
                          return 2.0 / (g.sigma * std::sqrt(2.0 * std::numbers::pi));
                        },
                        [](const UniformWindow& u) { return 1.0 / u.epsilon; },
                        [](const Tabulated& t) {
                          TabulatedView v{t};
                          double best = 0.0;
                          for (std::size_t j = 0; j + 1 < v.n(); ++j) {
                            double s = 0.0;
                            for (std::size_t i = 0; i < v.n(); ++i) s += std::abs(v.entry(i, j + 1) - v.entry(i, j));
                            best = std::max(best, s);
                          }
                          return best;  // (sum |dm| * dy) / dx with dy = dx
                        },
                    },
                    variant_);
}

// ---------------------------------------------------------------- Params

double ModelParams::growth_bound() const {
  if (c) return *c;
  Polynomial h = growth();
  if (h.degree() == 0) return h(0.0);
  if (h.degree() % 2 == 1 || h.leading() > 0.0)
    fail(ErrorCode::InvalidArgument, "growth rate is unbounded above");
  double best = -kInf;
  for (double x : h.derivative().real_roots()) best = std::max(best, h(x));
  return best;
}

double growth_rate(const ModelParams& params, double x) { return params.birth(x) - params.death(x); }

double h_lambda(const ModelParams& params, double lambda, double x) { return growth_rate(params, x) - lambda; }

// ---------------------------------------------------------------- Validation

namespace {

double kernel_moment(const MutationKernel& kernel, double x, int q) {
  const int p = 2 * q;
  return std::visit(Overloaded{
                        [&](const GaussianConvolution& g) {
                          double s = 0.0;
                          for (int k = 0; k <= p; k += 2)
                            s += binomial(p, k) * std::pow(x, p - k) * std::pow(g.sigma, k) * double_factorial(k - 1);
                          return s;
                        },
                        [&](const UniformWindow& u) {
                          double a = x - u.epsilon, b = x + u.epsilon;
                          return (std::pow(b, p + 1) - std::pow(a, p + 1)) / ((p + 1) * 2.0 * u.epsilon);
                        },
                        [&](const Tabulated& t) {
                          auto row = TabulatedView{t}.row(x);
                          double s = 0.0;
                          const int sub = 8;
                          double w = t.grid.dx() / sub;
                          for (std::size_t k = 0; k + 1 < t.grid.size(); ++k)
                            for (int r = 0; r < sub; ++r) {
                              double y = t.grid.x(k) + (r + 0.5) * w;
                              s += std::pow(y, p) * row.at(y) * w;
                            }
                          return s;
                        },
                    },
                    kernel.variant());
}

// Total mass of m(x, .) over the real line.
double row_total(const MutationKernel& kernel, double x) {
  if (kernel.is_even_convolution()) return 1.0;
  return kernel.cell_weight(x, -kInf, kInf);
}

}  // namespace

KernelReport validate_kernel(const MutationKernel& kernel, const Grid& grid, int q, KernelTolerances tol) {
  if (q < 1) fail(ErrorCode::InvalidArgument, "q must be >= 1");
  const std::size_t n = grid.size();
  KernelReport report;
  std::vector<double> column(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double x = grid.x(i);
    for (std::size_t j = 0; j < n; ++j) column[j] += kernel.cell_weight(x, grid.cell_lo(j), grid.cell_hi(j));
    if (!grid.in_inner_half(i)) continue;
    double total = row_total(kernel, x);
    report.max_leak = std::max(report.max_leak, total - kernel.cell_weight(x, grid.lo_edge(), grid.hi_edge()));
    report.max_row_deviation = std::max(report.max_row_deviation, std::abs(total - 1.0));
    report.moment_2q = std::max(report.moment_2q, kernel_moment(kernel, x, q));
  }
  for (std::size_t j = 0; j < n; ++j)
    if (grid.in_inner_half(j))
      report.max_column_deviation = std::max(report.max_column_deviation, std::abs(column[j] - 1.0));

  if (const auto& cert = kernel.certificate()) {
    bool holds = true;
    const int probes = 64;
    for (std::size_t i = 0; i < n && holds; ++i) {
      if (!grid.in_inner_half(i)) continue;
      double x = grid.x(i);
      for (int k = 0; k < probes; ++k) {
        double y = x + cert->epsilon * (2.0 * (k + 0.5) / probes - 1.0);
        if (kernel.density(x, y) < cert->kappa0 * (1.0 - 1e-12)) {
          holds = false;
          break;
        }
      }
    }
    report.minorization_holds = holds;
  }

  if (report.max_leak > tol.leak)
    fail(ErrorCode::MassLeak, "kernel mass leaving the grid from inner-half sources is " +
                                  std::to_string(report.max_leak));
  if (report.max_row_deviation > tol.mass || report.max_column_deviation > tol.mass)
    fail(ErrorCode::DoubleStochasticityViolation,
         "row deviation " + std::to_string(report.max_row_deviation) + ", column deviation " +
             std::to_string(report.max_column_deviation));
  return report;
}

std::pair<int, double> growth_decay_exponent(const Polynomial& h, int max_q) {
  Polynomial h_neg = h.compose_linear(0.0, -1.0);
  for (int q = max_q; q >= 1; --q) {
    std::vector<double> mono(static_cast<std::size_t>(q) + 1, 0.0);
    mono.back() = 1.0;
    Polynomial power(std::move(mono));
    Polynomial plus = h + power, minus = h_neg + power;
    if (!(plus.leading() < 0.0 && minus.leading() < 0.0)) continue;
    double x0 = 0.0;
    for (double r : plus.real_roots()) x0 = std::max(x0, r);
    for (double r : minus.real_roots()) x0 = std::max(x0, r);
    return {q, x0};
  }
  return {0, kInf};
}

GrowthReport validate_growth(const ModelParams& params, const Grid& grid) {
  const Polynomial h = params.growth();
  GrowthReport r{};
  r.h_at_zero = h(0.0);
  r.h_at_x_min = h(grid.x_min());
  r.h_at_x_max = h(grid.x_max());
  if (params.birth.degree() != 0)
    fail(ErrorCode::InvalidArgument, "birth rate must be constant");
  const Polynomial& d = params.death;
  if (d.degree() < 2 || d.degree() % 2 != 0 || !(d.leading() > 0.0))
    fail(ErrorCode::InvalidArgument, "death rate must be a polynomial with positive even leading term");
  if (params.birth(0.0) < 0.0 || d.min_on(grid.x_min(), grid.x_max()) < 0.0)
    fail(ErrorCode::InvalidArgument, "birth and death rates must be nonnegative");
  if (!(r.h_at_zero > 0.0)) fail(ErrorCode::InvalidArgument, "growth rate must be positive at 0");
  if (!(r.h_at_x_min < 0.0) || !(r.h_at_x_max < 0.0))
    fail(ErrorCode::InvalidArgument, "growth rate must be negative at both grid ends");
  r.c = params.growth_bound();
  auto [q, x0] = growth_decay_exponent(h);
  r.largest_q = q;
  r.x0 = x0;
  if (q < params.q)
    fail(ErrorCode::InvalidArgument,
         "growth decay holds only up to q = " + std::to_string(q) + ", configured q = " + std::to_string(params.q));
  return r;
}

}  // namespace ancestral
