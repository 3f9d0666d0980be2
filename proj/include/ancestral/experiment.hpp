#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ancestral/config.hpp"
#include "ancestral/error.hpp"

namespace ancestral {

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct Manifest {
  ExperimentKind kind = ExperimentKind::Stationary;
  std::vector<ManifestEntry> files;
  /// False when a validate run exceeds its tolerances.
  bool passed = true;
  std::optional<ErrorCode> error_code;
  std::string error;
  nlohmann::json summary;

  nlohmann::json to_json() const;
};

/// Runs the experiment, writing every output plus resolved_config.json and
/// manifest.json into config.out_dir. Module errors are recorded in the
/// manifest and then rethrown.
Manifest run_experiment(const ExperimentConfig& config);

/// 0 on success, 2 for configuration errors, 3 for numerical failures, 4 for
/// statistical failures.
int exit_code_for(ErrorCode code);
int exit_code_for(const Manifest& manifest);

std::string sha256_hex(std::string_view bytes);

/// Shortest decimal that reads back to the same double; locale independent.
std::string format_double(double v);

/// Dotted Ulam-Harris label, e.g. "3.1.2".
std::string label_string(const std::vector<std::uint32_t>& label);

}  // namespace ancestral
