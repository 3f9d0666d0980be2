#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ancestral/ibm.hpp"
#include "ancestral/model.hpp"
#include "ancestral/pde.hpp"

namespace ancestral {

enum class ExperimentKind { Simulate, Stationary, Spine, Validate, Duality };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

/// Initial density: the stationary F or a Gaussian bump of given mass.
struct InitSpec {
  bool stationary = true;
  double mean = 0.0;
  double sd = 0.5;
  double mass = 1.0;
};

struct SimulateSection {
  double T = 10.0;
  Mode mode = Mode::Nonlinear;
  InitSpec init;
  std::size_t lineages = 20;
  bool svg = true;
  double lookahead = 0.1;
};

struct StationarySection {
  StationaryOptions solver;
  bool dense_check = false;
};

struct SpineSection {
  bool reversed = false;
  double T = 2.0;
  std::size_t n_paths = 1000;
  /// Fixed start for the forward spine; the biased start when unset.
  std::optional<double> start;
  double mt_dt = 1e-3;
};

struct ValidateSection {
  double T = 10.0;
  std::size_t replicates = 500;
  std::vector<double> checkpoints{2.5, 5.0, 7.5};
  std::size_t n_spine = 10000;
  double tolerance = 0.1;
  std::size_t min_survivors = 10;
  std::size_t calibration_reps = 10;
  Mode mode = Mode::Nonlinear;
  /// Carrying capacities for the trend table; entries equal to model.K reuse the main run.
  std::vector<int> trend_K{100, 300, 1000};
};

struct DualitySection {
  std::size_t pairs = 100;
  double t = 1.0;
  /// Euler step; 0 picks half the stability bound.
  double dt = 0.0;
};

struct ExperimentConfig {
  ModelParams model;
  Grid grid{-1.0, 1.0, 3};
  nlohmann::json kernel_json;
  ExperimentKind kind = ExperimentKind::Stationary;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
  SimulateSection simulate;
  StationarySection stationary;
  SpineSection spine;
  ValidateSection validate;
  DualitySection duality;

  /// The configuration with every default written out.
  nlohmann::json resolved() const;
};

/// Parses and validates a configuration document. Relative kernel paths are
/// resolved against `base_dir`. Throws ConfigInvalid naming the offending field.
/// Zero set of h widened by six kernel standard deviations on each side, 401 nodes.
Grid default_grid(const ModelParams& params);

ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace ancestral
