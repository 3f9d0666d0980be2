#pragma once

#include <cstddef>
#include <vector>

namespace ancestral {

/// Weighted point sample; empty weights mean equal weights.
struct EmpiricalSample {
  std::vector<double> values;
  std::vector<double> weights;

  double total_weight() const;
  /// Weighted mean of f over the points.
  template <class F>
  double mean(F&& f) const {
    double s = 0.0, w = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      double wi = weights.empty() ? 1.0 : weights[i];
      s += wi * f(values[i]);
      w += wi;
    }
    return w > 0.0 ? s / w : 0.0;
  }
};

}  // namespace ancestral
