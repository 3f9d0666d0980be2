#include "ancestral/trait_path.hpp"

#include <algorithm>
#include <cmath>

#include "ancestral/error.hpp"

namespace ancestral {

TraitPath::TraitPath(double t0, double t1, double initial, double slope, std::vector<Jump> jumps)
    : t0_(t0), t1_(t1), initial_(initial), slope_(slope), jumps_(std::move(jumps)) {
  if (!(t0 <= t1)) fail(ErrorCode::InvalidArgument, "path needs t0 <= t1");
  for (std::size_t k = 0; k < jumps_.size(); ++k) {
    if (jumps_[k].time < t0 || jumps_[k].time > t1)
      fail(ErrorCode::InvalidArgument, "jump time outside the path interval");
    if (k && !(jumps_[k].time > jumps_[k - 1].time))
      fail(ErrorCode::InvalidArgument, "jump times must be strictly increasing");
  }
}

double TraitPath::evaluate(double t, bool strict) const {
  if (t < t0_ || (strict && t == t0_)) return initial_;
  if (t > t1_) {
    t = t1_;
    strict = false;
  }
  auto it = strict ? std::lower_bound(jumps_.begin(), jumps_.end(), t,
                                      [](const Jump& j, double v) { return j.time < v; })
                   : std::upper_bound(jumps_.begin(), jumps_.end(), t,
                                      [](double v, const Jump& j) { return v < j.time; });
  if (it == jumps_.begin()) return initial_ + slope_ * (t - t0_);
  --it;
  return it->value + slope_ * (t - it->time);
}

double TraitPath::value_at(double t) const { return evaluate(t, false); }

double TraitPath::left_limit(double t) const { return evaluate(t, true); }

TraitPath reverse_path(const TraitPath& path, double T) {
  if (!(T > 0.0)) fail(ErrorCode::InvalidArgument, "reversal horizon must be positive");
  std::vector<Jump> jumps;
  for (auto it = path.jumps().rbegin(); it != path.jumps().rend(); ++it) {
    if (!(it->time > 0.0 && it->time < T)) continue;
    jumps.push_back({T - it->time, path.left_limit(it->time)});
  }
  return TraitPath(0.0, T, path.left_limit(T), -path.slope(), std::move(jumps));
}

}  // namespace ancestral
