#include <algorithm>
#include <cmath>

#include "ancestral/error.hpp"
#include "ancestral/stats.hpp"

namespace ancestral {

TraitPath pick_lineage(const PopulationHistory& history, double T, std::uint64_t pick_key) {
  auto alive = alive_at(history, T);
  if (alive.empty()) fail(ErrorCode::Extinct, "no individual alive at the sampling time");
  CounterStream stream(hash_words(pick_key, {history.seed, history.stream_key}));
  auto k = static_cast<std::size_t>(stream.uniform(0, 0) * static_cast<double>(alive.size()));
  k = std::min(k, alive.size() - 1);
  return extract_lineage(history, alive[k], T);
}

LineageReport reversed_lineage_comparison(const std::vector<PopulationHistory>& histories, const SpineContext& ctx,
                                          double T, const std::vector<double>& checkpoints, std::size_t n_spine,
                                          MasterRng& rng, LineageOptions options) {
  const std::uint64_t pick_key = rng();
  std::vector<TraitPath> reversed;
  std::size_t extinct = 0;
  for (const PopulationHistory& h : histories) {
    if (h.final_time < T) fail(ErrorCode::InvalidArgument, "history shorter than the sampling time");
    if (alive_at(h, T).empty()) {
      ++extinct;
      continue;
    }
    reversed.push_back(reverse_path(pick_lineage(h, T, pick_key), T));
  }
  return compare_reversed_lineages(reversed, extinct, ctx, T, checkpoints, n_spine, rng, options);
}

LineageReport compare_reversed_lineages(const std::vector<TraitPath>& reversed, std::size_t extinct,
                                        const SpineContext& ctx, double T, const std::vector<double>& checkpoints,
                                        std::size_t n_spine, MasterRng& rng, LineageOptions options) {
  if (n_spine == 0) fail(ErrorCode::InvalidArgument, "need at least one reversed-process path");
  for (double s : checkpoints)
    if (s < 0.0 || s > T) fail(ErrorCode::InvalidArgument, "checkpoints must lie in [0, T]");
  LineageReport report;
  report.extinct = extinct;
  report.lineages = reversed.size();
  if (reversed.size() < options.min_survivors)
    fail(ErrorCode::TooFewSurvivors, std::to_string(reversed.size()) + " surviving histories, need " +
                                         std::to_string(options.min_survivors));

  ReversedBatch spine = sample_reversed(T, ctx, rng, n_spine);
  report.spine_paths = spine.paths.size();
  report.floor_exits = spine.floor_exits;

  std::vector<double> self(checkpoints.size(), 0.0);
  for (std::size_t r = 0; r < options.calibration_reps; ++r) {
    ReversedBatch a = sample_reversed(T, ctx, rng, reversed.size());
    ReversedBatch b = sample_reversed(T, ctx, rng, n_spine);
    for (std::size_t c = 0; c < checkpoints.size(); ++c)
      self[c] += wasserstein1(marginal(a.paths, checkpoints[c]), marginal(b.paths, checkpoints[c]));
  }
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    EmpiricalSample lin = marginal(reversed, checkpoints[c]);
    EmpiricalSample yr = marginal(spine.paths, checkpoints[c]);
    double sd = options.calibration_reps ? self[c] / static_cast<double>(options.calibration_reps) : 0.0;
    report.checkpoints.push_back({checkpoints[c], wasserstein1(lin, yr), ks_distance(lin, yr), sd, 3.0 * sd});
  }
  return report;
}

}  // namespace ancestral
