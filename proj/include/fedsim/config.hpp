#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsim/orchestrator.hpp"

namespace fedsim {

// Experiment configuration documents are flat `key = value` lines with dotted
// section prefixes; `#` starts a comment. Unknown keys are rejected.
//
//   method = FedAPHC
//   fed.total_rounds = 60
//   cluster.max_distance = 5

struct ConfigKey {
  std::string name;
  std::string accepted;  // human-readable accepted range
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

/// Training defaults from the reference setup; data defaults describe the
/// built-in synthetic benchmark.
ExperimentConfig default_experiment_config();

/// Throws ConfigError naming the key and its accepted range.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Parses `KEY=VALUE`.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key except run.output_dir with its current value, in table order.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace fedsim
