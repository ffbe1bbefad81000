#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "prodchoice/alternatives.hpp"
#include "prodchoice/choice.hpp"
#include "prodchoice/gateway.hpp"

namespace prodchoice::config {

enum class Stratification { joint, per_condition, none };
enum class Standardization { pooled, per_condition };

struct PipelineConfig {
  std::filesystem::path transcripts;
  std::filesystem::path annotations;
  std::filesystem::path out_dir;

  gateway::GatewayConfig gateway;

  std::size_t history_token_budget = 1024;
  int n_alternatives = alternatives::kDefaultAlternatives;
  bool fold_punctuation = false;

  std::uint64_t stratify_seed = 0;
  std::uint64_t paired_diff_seed = 0;

  std::string tie_policy = "strict";
  choice::ChanceConvention chance_convention = choice::ChanceConvention::candidates;
  Standardization standardization = Standardization::pooled;
  Stratification stratification = Stratification::joint;
  alternatives::OverlapMode overlap_mode = alternatives::OverlapMode::types;

  /// Echo of the effective settings for manifests and fit outputs.
  nlohmann::json echo() const;
};

/// Replaces ${VAR} and ${VAR:-default} in every string value. An unset
/// variable without a default is a ConfigError.
nlohmann::json interpolate_env(const nlohmann::json& value);

/// Parses and validates a config document. Relative paths resolve against
/// `base_dir`. Environment overrides (PRODCHOICE_MODE, PRODCHOICE_FIXTURES,
/// PRODCHOICE_SCORER_ENDPOINT, PRODCHOICE_GENERATOR_ENDPOINT,
/// PRODCHOICE_OUT_DIR) apply before validation.
PipelineConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

PipelineConfig load_config(const std::filesystem::path& path);

/// Checks that referenced inputs exist and the gateway can run in its mode.
void validate(const PipelineConfig& c);

std::string_view to_string(Stratification s) noexcept;
std::string_view to_string(Standardization s) noexcept;

}  // namespace prodchoice::config
