#pragma once

#include <vector>

namespace ancestral {

struct Jump {
  double time;
  double value;  // trait immediately after the jump
};

/// Cadlag trait trajectory on [t0, t1]: linear with slope `slope` between
/// jumps. Evaluation beyond t1 returns the value at t1; before t0 the initial value.
class TraitPath {
 public:
  TraitPath(double t0, double t1, double initial, double slope, std::vector<Jump> jumps = {});

  double t0() const noexcept { return t0_; }
  double t1() const noexcept { return t1_; }
  double initial() const noexcept { return initial_; }
  double slope() const noexcept { return slope_; }
  const std::vector<Jump>& jumps() const noexcept { return jumps_; }

  double value_at(double t) const;
  /// Limit from the left; equals value_at(t) away from jump times.
  double left_limit(double t) const;

 private:
  double evaluate(double t, bool strict) const;

  double t0_;
  double t1_;
  double initial_;
  double slope_;
  std::vector<Jump> jumps_;
};

/// Left-limit time reversal on [0, T]: R(p)(s) = p((T - s)-) for s < T and
/// R(p)(T) = p(0). Jumps at t become jumps at T - t, the slope changes sign.
TraitPath reverse_path(const TraitPath& path, double T);

}  // namespace ancestral
