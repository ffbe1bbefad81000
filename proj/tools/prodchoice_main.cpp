#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "prodchoice/config.hpp"
#include "prodchoice/error.hpp"
#include "prodchoice/gateway.hpp"
#include "prodchoice/pipeline.hpp"

namespace fs = std::filesystem;
using namespace prodchoice;

namespace {

struct Globals {
  std::string config_path;
  std::string mode;
  std::optional<std::uint64_t> seed;
};

// Config for a single stage: the file when given, defaults otherwise. Seeds
// only matter to sampling stages, which take them from --seed when no file
// is supplied.
config::PipelineConfig stage_config(const Globals& g) {
  config::PipelineConfig cfg;
  if (!g.config_path.empty()) cfg = config::load_config(g.config_path);
  if (!g.mode.empty()) cfg.gateway.mode = gateway::mode_from_string(g.mode);
  if (g.seed) {
    cfg.stratify_seed = *g.seed;
    cfg.paired_diff_seed = *g.seed;
  }
  return cfg;
}

void print_written(const pipeline::Written& files) {
  for (const auto& f : files) std::cout << f.string() << "\n";
}

int fail(const std::string& stage, const Error& e) {
  std::cerr << "prodchoice " << stage << ": " << e.what() << "\n";
  return exit_code_for(e.kind());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Production choice analysis over LM-generated alternatives"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config (JSON)");
  app.add_option("--mode", g.mode, "Gateway mode")->check(CLI::IsMember({"live", "record", "replay"}));
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Overrides both sampling seeds");

  std::string in, annotations, out, items, alts, costs_path, strat_path;
  std::optional<std::size_t> token_budget;
  std::optional<int> n;

  auto* preprocess = app.add_subcommand("preprocess", "Extract choice items from transcripts");
  preprocess->add_option("--in", in, "Transcript JSONL")->required();
  preprocess->add_option("--annotations", annotations, "Choice-point annotation JSONL")->required();
  preprocess->add_option("--out", out, "Item JSONL")->required();
  preprocess->add_option("--token-budget", token_budget, "History token budget");

  auto* generate = app.add_subcommand("generate", "Generate goal-directed and goal-agnostic alternatives");
  generate->add_option("--items", items, "Item JSONL")->required();
  generate->add_option("--out", out, "Alternatives JSONL")->required();
  generate->add_option("--n", n, "Alternatives per method");

  auto* judge = app.add_subcommand("judge", "Classify alternatives against the human sentence");
  judge->add_option("--in", in, "Generated alternatives JSONL")->required();
  judge->add_option("--items", items, "Item JSONL (default: items.jsonl next to --in)");
  judge->add_option("--out", out, "Judged alternatives JSONL")->required();

  auto* score = app.add_subcommand("score", "Surprisal profiles for contexts and continuations");
  score->add_option("--items", items, "Item JSONL")->required();
  score->add_option("--alternatives", alts, "Judged alternatives JSONL")->required();
  score->add_option("--out", out, "Profile JSONL")->required();

  auto* cost = app.add_subcommand("cost", "Cost bundles from surprisal profiles");
  cost->add_option("--in", in, "Profile JSONL")->required();
  cost->add_option("--out", out, "Cost JSONL")->required();

  auto* stratify = app.add_subcommand("stratify", "Stratified sampling of generated candidates");
  stratify->add_option("--costs", costs_path, "Cost JSONL")->required();
  auto* stratify_seed = stratify->add_option("--seed", seed, "Sampling seed");
  stratify->add_option("--out", out, "stratification.json")->required();

  auto* analyze = app.add_subcommand("analyze", "Choice analyses");
  analyze->require_subcommand(1);
  std::vector<std::pair<CLI::App*, pipeline::Analysis>> analyses;
  const std::map<pipeline::Analysis, std::string> blurbs{
      {pipeline::Analysis::rank, "Rank-1 shares with Poisson-binomial tests"},
      {pipeline::Analysis::pairwise, "Pairwise logistic regression with cluster-robust errors"},
      {pipeline::Analysis::condlogit, "Conditional logit over cost"},
      {pipeline::Analysis::diffs, "Human-minus-alternative paired differences"},
      {pipeline::Analysis::overlap, "Lexical overlap of continuations with their context"}};
  for (auto a : pipeline::kAllAnalyses) {
    auto* sub = analyze->add_subcommand(std::string(pipeline::to_string(a)), blurbs.at(a));
    sub->add_option("--costs", costs_path, "Cost JSONL")->required();
    sub->add_option("--stratification", strat_path, "stratification.json (omit for the full pool)");
    sub->add_option("--out", out, "Output directory")->required();
    analyses.emplace_back(sub, a);
  }

  auto* report = app.add_subcommand("report", "Render tables and plot data");
  report->add_option("--in", in, "Analysis directory")->required();
  report->add_option("--out", out, "Report directory")->required();

  auto* run = app.add_subcommand("run", "Run every stage");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt || *stratify_seed) g.seed = seed;

  std::string stage = "config";
  try {
    auto cfg = stage_config(g);
    auto make_gw = [&] {
      if (cfg.gateway.mode == gateway::Mode::replay && cfg.gateway.fixtures_path.empty()) {
        throw ConfigError("replay mode requires fixtures.path (--config) or PRODCHOICE_FIXTURES");
      }
      return gateway::make_gateway(cfg.gateway);
    };

    if (*run) {
      if (g.config_path.empty()) throw ConfigError("run requires --config");
      stage = "run";
      const auto summary = pipeline::run_pipeline(cfg, [](const std::string& line) { std::cerr << line << "\n"; });
      std::cout << "executed " << summary.executed.size() << ", skipped " << summary.skipped.size() << "\n";
      return 0;
    }
    if (*preprocess) {
      stage = "preprocess";
      cfg.transcripts = in;
      cfg.annotations = annotations;
      if (token_budget) cfg.history_token_budget = *token_budget;
      auto gw = make_gw();
      print_written(pipeline::run_preprocess(cfg, *gw, out));
      gw->flush();
    } else if (*generate) {
      stage = "generate";
      auto gw = make_gw();
      print_written(pipeline::run_generate(*gw, items, out, n.value_or(cfg.n_alternatives)));
      gw->flush();
    } else if (*judge) {
      stage = "judge";
      if (items.empty()) items = (fs::path(in).parent_path() / "items.jsonl").string();
      auto gw = make_gw();
      print_written(pipeline::run_judge(*gw, items, in, out));
      gw->flush();
    } else if (*score) {
      stage = "score";
      auto gw = make_gw();
      print_written(pipeline::run_score(cfg, *gw, items, alts, out));
      gw->flush();
    } else if (*cost) {
      stage = "cost";
      print_written(pipeline::run_cost(cfg, in, out));
    } else if (*stratify) {
      stage = "stratify";
      if (!g.seed && g.config_path.empty()) throw ConfigError("stratify requires --seed or a config with seeds");
      print_written(pipeline::run_stratify(cfg, costs_path, cfg.stratify_seed, out));
    } else if (*analyze) {
      for (const auto& [sub, a] : analyses) {
        if (!*sub) continue;
        stage = "analyze " + std::string(pipeline::to_string(a));
        if (a == pipeline::Analysis::diffs && !g.seed && g.config_path.empty()) {
          throw ConfigError("analyze diffs requires --seed or a config with seeds");
        }
        print_written(pipeline::run_analyze(cfg, a, costs_path, strat_path, out));
      }
    } else if (*report) {
      stage = "report";
      print_written(pipeline::run_report(in, out));
    }
  } catch (const Error& e) {
    return fail(stage, e);
  } catch (const std::exception& e) {
    std::cerr << "prodchoice " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
