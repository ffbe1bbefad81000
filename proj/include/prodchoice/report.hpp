#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace prodchoice::report {

namespace fs = std::filesystem;

/// Rank-1 shares per cost and condition with baselines under both chance
/// conventions. Input: rank_summary.json content.
std::string rank_table_markdown(const nlohmann::json& rank_summary);
std::string rank_table_csv(const nlohmann::json& rank_summary);

/// Conditional-logit alpha, per-item log-likelihood and choice metrics, with
/// uniform baselines. Input: condlogit_fit.json content.
std::string condlogit_table_markdown(const nlohmann::json& condlogit);
std::string condlogit_table_csv(const nlohmann::json& condlogit);

/// Pairwise coefficients with 95% CIs and significance stars.
std::string pairwise_table_markdown(const nlohmann::json& pairwise);
std::string pairwise_table_csv(const nlohmann::json& pairwise);

/// Human-minus-alternative differences with one-sided t-tests.
std::string diffs_table_markdown(const nlohmann::json& diffs);

/// Renders every table whose analysis output exists and copies the plot
/// data. Throws MissingInput if the analysis directory holds nothing usable.
std::vector<fs::path> write_report(const fs::path& analysis_dir, const fs::path& out_dir);

}  // namespace prodchoice::report
