#pragma once

// Config-driven experiment runner behind the everett-lab CLI.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace everett::lab {

/// Invalid configuration: unknown key, missing key, wrong type or out of range.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ExperimentKind { measure_chain, repeated, frequency, chebyshev, estimator, envariance, wavepacket };

std::string to_string(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::chebyshev;
  /// Validated parameters with defaults filled in.
  nlohmann::json parameters = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "everett-out";
};

/// Strict parse: unknown keys anywhere are errors.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct OutputFile {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunReport {
  std::string experiment;
  nlohmann::json config;
  double wall_seconds = 0.0;
  std::vector<CheckResult> checks;
  std::vector<OutputFile> outputs;
  nlohmann::json summary = nlohmann::json::object();

  bool passed() const;
  nlohmann::json to_json() const;
};

/// Executes the experiment, writes its CSV tables and report.json into
/// config.output_dir. Deterministic in (config, seed) apart from wall time.
RunReport run(const ExperimentConfig& config);

/// Figure table for experiment=frequency: z, rho(z|u) and the coarse
/// histogram evaluated at z. Returns the written path.
std::filesystem::path emit_figure_table(const ExperimentConfig& config);

std::string sha256_hex(std::string_view data);
/// Writes via a temporary sibling file and rename.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace everett::lab
