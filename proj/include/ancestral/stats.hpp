#pragma once

#include <cstddef>
#include <vector>

#include "ancestral/ibm.hpp"
#include "ancestral/model.hpp"
#include "ancestral/rng.hpp"
#include "ancestral/sample.hpp"
#include "ancestral/spine.hpp"

namespace ancestral {

/// W1 between the normalised empirical measures (integral of |F_a - F_b|).
double wasserstein1(const EmpiricalSample& a, const EmpiricalSample& b);
/// W1 between a normalised empirical measure and the normalised density
/// (piecewise constant on grid cells).
double wasserstein1(const EmpiricalSample& a, const DensityField& density);
/// sup |F_a - F_b| over the real line.
double ks_distance(const EmpiricalSample& a, const EmpiricalSample& b);

/// Values of each path at time t.
EmpiricalSample marginal(const std::vector<TraitPath>& paths, double t);

/// || m_{T-t} (PhatStar_t(F / lambda) - F / lambda) ||_1: the law of the forward
/// spine started from m_T F / lambda, propagated on the grid, against m_{T-t} F / lambda.
double marginal_check_spine(const SpineContext& ctx, double T, double t);

/// Grid law at time t of the forward spine on [0, T] started at the node nearest x:
/// PhatStar_t(delta_x) * m_{T-t}, normalised.
DensityField forward_spine_marginal(const SpineContext& ctx, double x, double T, double t);

struct CheckpointReport {
  double time;
  double w1;
  double ks;
  /// Mean W1 between independent reversed-process batches of the same sizes.
  double self_distance;
  double tolerance;  // 3 * self_distance
};

struct LineageReport {
  std::vector<CheckpointReport> checkpoints;
  std::size_t lineages = 0;
  std::size_t extinct = 0;
  std::size_t spine_paths = 0;
  std::size_t floor_exits = 0;
};

struct LineageOptions {
  std::size_t min_survivors = 10;
  std::size_t calibration_reps = 10;
};

/// One uniformly sampled lineage per surviving history, reversed at T, compared
/// with the reversed process started from F / lambda at each checkpoint. The pick
/// inside a history depends only on that history, so the result does not depend
/// on the order of `histories`.
LineageReport reversed_lineage_comparison(const std::vector<PopulationHistory>& histories, const SpineContext& ctx,
                                          double T, const std::vector<double>& checkpoints, std::size_t n_spine,
                                          MasterRng& rng, LineageOptions options = {});

/// The comparison step on lineages already picked (one per surviving history)
/// and reversed at T. Draws the pick key before calling this to reproduce
/// reversed_lineage_comparison without keeping the histories.
LineageReport compare_reversed_lineages(const std::vector<TraitPath>& reversed, std::size_t extinct,
                                        const SpineContext& ctx, double T, const std::vector<double>& checkpoints,
                                        std::size_t n_spine, MasterRng& rng, LineageOptions options = {});

/// Picks the lineage used for `history` by reversed_lineage_comparison.
TraitPath pick_lineage(const PopulationHistory& history, double T, std::uint64_t pick_key);

}  // namespace ancestral
