#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prodchoice/alternatives.hpp"
#include "prodchoice/choice.hpp"
#include "prodchoice/config.hpp"
#include "prodchoice/costs.hpp"
#include "prodchoice/gateway.hpp"

namespace prodchoice::pipeline {

namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Default artifact layout under an output directory.
struct Layout {
  fs::path root;
  fs::path items() const { return root / "items.jsonl"; }
  fs::path preprocess_stats() const { return root / "preprocess_stats.json"; }
  fs::path generated() const { return root / "generated.jsonl"; }
  fs::path alternatives() const { return root / "alternatives.jsonl"; }
  fs::path profiles() const { return root / "profiles.jsonl"; }
  fs::path costs() const { return root / "costs.jsonl"; }
  fs::path stratification() const { return root / "stratification.json"; }
  fs::path analysis() const { return root / "analysis"; }
  fs::path report() const { return root / "report"; }
  fs::path manifest() const { return root / "manifest.json"; }
};

/// Files a stage wrote, for the manifest.
using Written = std::vector<fs::path>;

Written run_preprocess(const config::PipelineConfig& cfg, gateway::Gateway& gw, const fs::path& out_items);

/// Alternatives for every item; dropped items are listed in the summary CSV
/// written next to `out`.
Written run_generate(gateway::Gateway& gw, const fs::path& items, const fs::path& out, int n);

Written run_judge(gateway::Gateway& gw, const fs::path& items, const fs::path& generated, const fs::path& out);

/// Context and continuation surprisal profiles for the human and every
/// generated record still in an alternative set.
Written run_score(const config::PipelineConfig& cfg, gateway::Gateway& gw, const fs::path& items,
                  const fs::path& alternatives, const fs::path& out);

Written run_cost(const config::PipelineConfig& cfg, const fs::path& profiles, const fs::path& out);

Written run_stratify(const config::PipelineConfig& cfg, const fs::path& costs, std::uint64_t seed,
                     const fs::path& out);

enum class Analysis { rank, pairwise, condlogit, diffs, overlap };
inline constexpr Analysis kAllAnalyses[] = {Analysis::rank, Analysis::pairwise, Analysis::condlogit,
                                            Analysis::diffs, Analysis::overlap};
std::string_view to_string(Analysis a) noexcept;

/// `stratification` may be empty to analyse the unstratified pool.
Written run_analyze(const config::PipelineConfig& cfg, Analysis what, const fs::path& costs,
                    const fs::path& stratification, const fs::path& out_dir);

/// Renders tables and plot data from an analysis directory.
Written run_report(const fs::path& analysis_dir, const fs::path& out_dir);

struct RunSummary {
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
  nlohmann::json manifest;
};

/// All stages in dependency order with content-hash skipping. `log` receives
/// one line per stage.
RunSummary run_pipeline(const config::PipelineConfig& cfg,
                        const std::function<void(const std::string&)>& log = {});

// --- shared helpers --------------------------------------------------------

struct CostRow {
  std::string item_id;
  std::string candidate_id;
  alternatives::Method method = alternatives::Method::human;
  bool in_goal_directed = false;
  bool in_goal_agnostic = false;
  costs::CostBundle bundle;
  double lexical_overlap = 0.0;

  bool is_human() const { return method == alternatives::Method::human; }
};

inline const std::vector<std::string> kCostNames = {"surprisal", "uid_local", "uid_global", "length"};

std::optional<double> cost_value(const costs::CostBundle& b, std::string_view cost);

nlohmann::json to_json(const CostRow& r);
CostRow cost_row_from_json(const nlohmann::json& j);
std::vector<CostRow> read_cost_rows(const fs::path& path);

/// Choice sets for one (cost, condition): the human plus every alternative in
/// that condition's set with a defined cost and, when `selected` is given,
/// chosen by stratification. Items without a usable alternative are skipped.
std::vector<choice::ChoiceSet> build_choice_sets(const std::vector<CostRow>& rows, std::string_view cost,
                                                 choice::Condition condition,
                                                 const std::set<std::string>* selected);

}  // namespace prodchoice::pipeline
