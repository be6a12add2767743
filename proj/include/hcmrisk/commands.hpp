#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hcmrisk::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "1.0.0";

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;        // overrides the config
  std::optional<std::filesystem::path> out;  // overrides output_dir
};

// Parsed experiment configuration. Relative paths resolve against the
// directory holding the config file.
struct ExperimentConfig {
  nlohmann::json raw;
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  static ExperimentConfig load(const RunOptions& options);
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                    const RunOptions& overrides = {});

  bool has(const std::string& key) const { return raw.contains(key); }
  std::filesystem::path path(const std::string& key) const;  // required
  // `fallback` is returned unchanged when the key is absent.
  std::filesystem::path path_or(const std::string& key, const std::filesystem::path& fallback) const;
  double number_or(const std::string& key, double fallback) const;
  bool flag_or(const std::string& key, bool fallback) const;
};

// Each command writes under output_dir and returns its main report.
nlohmann::json cmd_train(const ExperimentConfig& cfg);
nlohmann::json cmd_validate(const ExperimentConfig& cfg);
nlohmann::json cmd_survival(const ExperimentConfig& cfg);
nlohmann::json cmd_longitudinal(const ExperimentConfig& cfg);
nlohmann::json cmd_synth(const ExperimentConfig& cfg);
nlohmann::json cmd_esc_score(const ExperimentConfig& cfg);

// Dispatches by name ("train", "validate", "survival", "longitudinal",
// "synth", "esc-score") and writes the run manifest.
nlohmann::json run_command(const std::string& name, const ExperimentConfig& cfg);

}  // namespace hcmrisk::cli
