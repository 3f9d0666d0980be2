#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ancestral/model.hpp"
#include "ancestral/rng.hpp"
#include "ancestral/sample.hpp"
#include "ancestral/trait_path.hpp"

namespace ancestral {

enum class Mode { Nonlinear, Frozen };
enum class EventKind { Birth, Death, Mutation };

std::string_view to_string(EventKind kind);

struct IndividualRecord {
  /// Ulam-Harris-Neveu label; roots have a single entry.
  std::vector<std::uint32_t> label;
  std::optional<std::size_t> parent;  // index into PopulationHistory::individuals
  double birth_time;
  std::optional<double> death_time;
  double birth_trait;
  std::vector<Jump> jump_log;
  std::uint32_t children = 0;

  bool alive_at(double t) const noexcept { return birth_time <= t && (!death_time || t < *death_time); }
  double trait_at(double t, double rho) const;
};

struct Event {
  double time;
  EventKind kind;
  std::size_t individual;  // the newborn for births
};

struct PopulationState {
  std::vector<double> traits;
  std::uint64_t seed;
};

/// round(K * mass(init)) roots with traits drawn from init / mass(init).
PopulationState init_population(const ModelParams& params, const DensityField& init, std::uint64_t seed);

struct SimulationOptions {
  Mode mode = Mode::Nonlinear;
  /// Competition rate replacing N/K in frozen mode.
  double frozen_lambda = 0.0;
  /// Key of the per-individual random streams; the seed is used when unset.
  /// Runs sharing a key and an initial state are driven by the same noise.
  std::optional<std::uint64_t> shared_randomness;
  double lookahead = 0.1;
  /// Rate of each candidate band.
  double band_rate = 0.5;
  /// Relative slack on the competition bound.
  double competition_margin = 0.1;
  /// Cap on N; 0 means 10 * K * max(c, frozen_lambda, 1).
  std::size_t max_population = 0;
};

struct PopulationHistory {
  ModelParams params;
  Mode mode;
  double frozen_lambda;
  std::uint64_t seed;
  std::uint64_t stream_key;
  double final_time;
  std::size_t initial_count;
  std::vector<IndividualRecord> individuals;  // roots first, then in order of birth
  std::vector<Event> events;                  // time-ordered
  /// Candidate points that triggered nothing.
  std::size_t phantom_count = 0;
};

PopulationHistory simulate(const ModelParams& params, const PopulationState& init, double T, std::uint64_t seed,
                           SimulationOptions options = {});

/// Population size at t by replaying the event ledger.
std::size_t ledger_count(const PopulationHistory& history, double t);
/// Indices of individuals alive at t.
std::vector<std::size_t> alive_at(const PopulationHistory& history, double t);

/// Traits alive at t, each with weight 1/K.
EmpiricalSample snapshot(const PopulationHistory& history, double t);

std::optional<std::size_t> find_individual(const PopulationHistory& history,
                                           const std::vector<std::uint32_t>& label);

/// Ancestral trait path of individual `index` on [0, t].
TraitPath extract_lineage(const PopulationHistory& history, std::size_t index, double t);

/// Lineage of an individual drawn uniformly among those alive at T.
TraitPath sample_uniform_lineage(const PopulationHistory& history, double T, MasterRng& rng);
/// Same, also returning the chosen index.
std::pair<std::size_t, TraitPath> sample_uniform_lineage_indexed(const PopulationHistory& history, double T,
                                                                 MasterRng& rng);

/// Uniform double in (0, 1) from a master stream.
double next_uniform(MasterRng& rng);

}  // namespace ancestral
