#include "prodchoice/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "prodchoice/align.hpp"
#include "prodchoice/concurrency.hpp"
#include "prodchoice/corpus.hpp"
#include "prodchoice/error.hpp"
#include "prodchoice/hashing.hpp"
#include "prodchoice/io.hpp"
#include "prodchoice/prompts.hpp"
#include "prodchoice/report.hpp"
#include "prodchoice/stats.hpp"
#include "prodchoice/text.hpp"

namespace prodchoice::pipeline {

using nlohmann::json;
using alternatives::AlternativeRecord;
using alternatives::Method;
using choice::Condition;

std::string_view to_string(Analysis a) noexcept {
  switch (a) {
    case Analysis::rank: return "rank";
    case Analysis::pairwise: return "pairwise";
    case Analysis::condlogit: return "condlogit";
    case Analysis::diffs: return "diffs";
    case Analysis::overlap: return "overlap";
  }
  return "rank";
}

namespace {

constexpr Condition kConditions[] = {Condition::goal_directed, Condition::goal_agnostic};

std::vector<corpus::ChoiceItem> read_items(const fs::path& path) {
  std::vector<corpus::ChoiceItem> items;
  for (const auto& row : io::read_jsonl(path)) items.push_back(corpus::choice_item_from_json(row));
  return items;
}

std::vector<AlternativeRecord> read_records(const fs::path& path) {
  std::vector<AlternativeRecord> out;
  for (const auto& row : io::read_jsonl(path)) out.push_back(alternatives::alternative_from_json(row));
  return out;
}

/// Records grouped by item, keeping first-appearance order.
std::vector<std::pair<std::string, std::vector<AlternativeRecord>>> group_by_item(
    std::vector<AlternativeRecord> records) {
  std::vector<std::pair<std::string, std::vector<AlternativeRecord>>> out;
  std::map<std::string, std::size_t> index;
  for (auto& r : records) {
    auto [it, inserted] = index.try_emplace(r.item_id, out.size());
    if (inserted) out.push_back({r.item_id, {}});
    out[it->second].second.push_back(std::move(r));
  }
  return out;
}

bool in_condition(const CostRow& r, Condition c) {
  return c == Condition::goal_directed ? r.in_goal_directed : r.in_goal_agnostic;
}

json error_json(const Error& e) { return {{"error", std::string(e.name())}, {"message", e.what()}}; }

}  // namespace

// --- cost rows ---------------------------------------------------------------

std::optional<double> cost_value(const costs::CostBundle& b, std::string_view cost) {
  if (cost == "surprisal") return b.surprisal;
  if (cost == "uid_local") return b.uid_local;
  if (cost == "uid_global") return b.uid_global;
  if (cost == "length") return static_cast<double>(b.length_words);
  throw InvalidInput("unknown cost measure '" + std::string(cost) + "'");
}

json to_json(const CostRow& r) {
  json j = costs::to_json(r.bundle);
  j["item_id"] = r.item_id;
  j["candidate_id"] = r.candidate_id;
  j["method"] = alternatives::to_string(r.method);
  j["in_goal_directed"] = r.in_goal_directed;
  j["in_goal_agnostic"] = r.in_goal_agnostic;
  j["lexical_overlap"] = r.lexical_overlap;
  return j;
}

CostRow cost_row_from_json(const json& j) {
  CostRow r;
  try {
    r.item_id = j.at("item_id").get<std::string>();
    r.candidate_id = j.at("candidate_id").get<std::string>();
    r.method = alternatives::method_from_string(j.at("method").get<std::string>());
    r.in_goal_directed = j.at("in_goal_directed").get<bool>();
    r.in_goal_agnostic = j.at("in_goal_agnostic").get<bool>();
    r.bundle = costs::cost_bundle_from_json(j);
    r.lexical_overlap = j.value("lexical_overlap", 0.0);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad cost row: ") + e.what());
  }
  return r;
}

std::vector<CostRow> read_cost_rows(const fs::path& path) {
  std::vector<CostRow> rows;
  for (const auto& j : io::read_jsonl(path)) rows.push_back(cost_row_from_json(j));
  return rows;
}

std::vector<choice::ChoiceSet> build_choice_sets(const std::vector<CostRow>& rows, std::string_view cost,
                                                 Condition condition, const std::set<std::string>* selected) {
  std::vector<choice::ChoiceSet> sets;
  std::map<std::string, std::size_t> index;
  std::vector<std::optional<choice::Candidate>> humans;
  std::vector<std::vector<choice::Candidate>> alts;
  for (const auto& r : rows) {
    auto [it, inserted] = index.try_emplace(r.item_id, humans.size());
    if (inserted) {
      humans.emplace_back();
      alts.emplace_back();
    }
    const auto v = cost_value(r.bundle, cost);
    if (!v) continue;
    if (r.is_human()) {
      humans[it->second] = choice::Candidate{r.candidate_id, *v, true};
    } else if (in_condition(r, condition) && (!selected || selected->count(r.candidate_id))) {
      alts[it->second].push_back({r.candidate_id, *v, false});
    }
  }
  std::vector<std::string> order(index.size());
  for (const auto& [id, i] : index) order[i] = id;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!humans[i] || alts[i].empty()) continue;
    choice::ChoiceSet s;
    s.item_id = order[i];
    s.condition = condition;
    s.candidates.push_back(*humans[i]);
    s.candidates.insert(s.candidates.end(), alts[i].begin(), alts[i].end());
    sets.push_back(std::move(s));
  }
  return sets;
}

// --- stages ------------------------------------------------------------------

Written run_preprocess(const config::PipelineConfig& cfg, gateway::Gateway& gw, const fs::path& out_items) {
  std::vector<corpus::RawUtterance> utterances;
  for (const auto& row : io::read_jsonl(cfg.transcripts)) utterances.push_back(corpus::raw_utterance_from_json(row));
  const auto annotations = corpus::annotations_from_jsonl(io::read_jsonl(cfg.annotations));
  corpus::PreprocessStats st;
  const auto items = corpus::preprocess(utterances, annotations, cfg.history_token_budget,
                                        [&](std::string_view t) { return gw.count_tokens(t); }, &st);
  std::vector<json> rows;
  for (const auto& item : items) rows.push_back(corpus::to_json(item));
  io::write_jsonl(out_items, rows);

  json excluded = json::object();
  for (const auto& [reason, n] : st.excluded) excluded[std::string(corpus::to_string(reason))] = n;
  const json stats = {{"raw_utterances", st.raw_utterances}, {"dialogues", st.dialogues},
                      {"empty_dialogues", st.empty_dialogues}, {"turn_utterances", st.turn_utterances},
                      {"excluded", excluded}, {"items", st.items},
                      {"cleaning_rules_version", corpus::kCleaningRulesVersion}};
  const auto stats_path = out_items.parent_path() / "preprocess_stats.json";
  io::write_file(stats_path, io::dump_pretty(stats));
  return {out_items, stats_path};
}

Written run_generate(gateway::Gateway& gw, const fs::path& items_path, const fs::path& out, int n) {
  const auto items = read_items(items_path);
  const auto generated = alternatives::generate_all(gw, items, n);
  std::vector<json> rows;
  std::vector<alternatives::AlternativeSetSummary> summaries;
  for (const auto& g : generated) {
    for (const auto& r : g.records) rows.push_back(alternatives::to_json(r));
    summaries.push_back(g.summary);
  }
  io::write_jsonl(out, rows);
  const auto summary_path = out.parent_path() / "generation_summary.csv";
  io::write_file(summary_path, alternatives::summary_csv(summaries));
  return {out, summary_path};
}

Written run_judge(gateway::Gateway& gw, const fs::path& items_path, const fs::path& generated, const fs::path& out) {
  std::map<std::string, corpus::ChoiceItem> items;
  for (auto& item : read_items(items_path)) items.emplace(item.item_id, std::move(item));

  std::vector<json> rows;
  std::vector<AlternativeRecord> all;
  std::vector<alternatives::AlternativeSetSummary> summaries;
  json inconsistencies = json::array();
  for (auto& [item_id, records] : group_by_item(read_records(generated))) {
    const auto it = items.find(item_id);
    if (it == items.end()) throw InvalidInput("alternatives reference unknown item " + item_id);
    auto judged = alternatives::reclassify(gw, std::move(records), it->second);
    for (const auto& id : alternatives::judge_inconsistencies(judged)) inconsistencies.push_back(id);
    summaries.push_back(alternatives::summarize(item_id, judged));
    for (auto& r : judged) {
      rows.push_back(alternatives::to_json(r));
      all.push_back(std::move(r));
    }
  }
  io::write_jsonl(out, rows);

  const auto dir = out.parent_path();
  io::write_file(dir / "alternatives_summary.csv", alternatives::summary_csv(summaries));
  const auto table = alternatives::goal_match_proportions(all);
  io::CsvWriter csv({"method", "n", "n_yes", "proportion"});
  for (const auto& g : table.rows) {
    csv.row({std::string(alternatives::to_string(g.method)), std::to_string(g.n), std::to_string(g.n_yes),
             io::fmt_real(g.proportion)});
  }
  io::write_file(dir / "goal_match.csv", csv.str());
  const json report = {{"increasing_with_history", table.increasing_with_history},
                       {"judge_inconsistencies", inconsistencies}};
  io::write_file(dir / "judge_report.json", io::dump_pretty(report));
  return {out, dir / "alternatives_summary.csv", dir / "goal_match.csv", dir / "judge_report.json"};
}

Written run_score(const config::PipelineConfig& cfg, gateway::Gateway& gw, const fs::path& items_path,
                  const fs::path& alternatives_path, const fs::path& out) {
  std::map<std::string, corpus::ChoiceItem> items;
  for (auto& item : read_items(items_path)) items.emplace(item.item_id, std::move(item));
  const std::string& sep = cfg.gateway.separator;
  const costs::AlignOptions align{cfg.fold_punctuation};

  struct Job {
    const corpus::ChoiceItem* item;
    std::vector<AlternativeRecord> candidates;
    std::size_t first_request;
  };
  std::vector<Job> jobs;
  std::vector<gateway::ScoreRequest> requests;
  for (auto& [item_id, records] : group_by_item(read_records(alternatives_path))) {
    const auto it = items.find(item_id);
    if (it == items.end()) throw InvalidInput("alternatives reference unknown item " + item_id);
    const auto& item = it->second;
    const std::string history = item.history_full.empty() ? "" : item.history_full + sep;
    Job job{&item, {}, requests.size()};
    requests.push_back({history, item.context, cfg.gateway.scorer_model_id});
    for (auto& r : records) {
      if (r.method != Method::human && !r.in_goal_directed && !r.in_goal_agnostic) continue;
      requests.push_back({history + item.context, " " + r.continuation, cfg.gateway.scorer_model_id});
      job.candidates.push_back(std::move(r));
    }
    jobs.push_back(std::move(job));
  }

  const auto responses = gw.score_batch(requests);
  std::vector<json> rows;
  io::CsvWriter dropped({"item_id", "candidate_id", "reason"});
  auto recoverable = [](const Error& e) {
    return dynamic_cast<const ContextOverflow*>(&e) || dynamic_cast<const AlignmentError*>(&e) ||
           dynamic_cast<const InvalidRequest*>(&e);
  };
  for (const auto& job : jobs) {
    const auto& item = *job.item;
    costs::SurprisalProfile context_profile;
    bool context_truncated = false;
    try {
      const auto& resp = responses[job.first_request].get();
      context_truncated = resp.truncated;
      context_profile = costs::word_surprisals(resp, text::split_ws(item.context), costs::ProfileSource::context, align);
    } catch (const Error& e) {
      if (!recoverable(e)) throw;
      dropped.row({item.item_id, "", e.what()});
      continue;
    }
    for (std::size_t k = 0; k < job.candidates.size(); ++k) {
      const auto& r = job.candidates[k];
      try {
        const auto& resp = responses[job.first_request + 1 + k].get();
        const auto profile = costs::word_surprisals(resp, text::split_ws(r.continuation),
                                                    costs::ProfileSource::continuation, align);
        rows.push_back({{"item_id", r.item_id},
                        {"candidate_id", r.candidate_id},
                        {"method", alternatives::to_string(r.method)},
                        {"in_goal_directed", r.in_goal_directed},
                        {"in_goal_agnostic", r.in_goal_agnostic},
                        {"context", item.context},
                        {"continuation", r.continuation},
                        {"truncated", context_truncated || resp.truncated},
                        {"context_profile", costs::to_json(context_profile)},
                        {"continuation_profile", costs::to_json(profile)}});
      } catch (const Error& e) {
        if (!recoverable(e)) throw;
        dropped.row({r.item_id, r.candidate_id, e.what()});
      }
    }
  }
  io::write_jsonl(out, rows);
  const auto dropped_path = out.parent_path() / "score_dropped.csv";
  io::write_file(dropped_path, dropped.str());
  return {out, dropped_path};
}

Written run_cost(const config::PipelineConfig& cfg, const fs::path& profiles, const fs::path& out) {
  std::vector<json> rows;
  io::CsvWriter csv({"item_id", "candidate_id", "method", "in_goal_directed", "in_goal_agnostic", "surprisal",
                     "uid_local", "uid_global", "length", "lexical_overlap"});
  io::CsvWriter dropped({"item_id", "candidate_id", "reason"});
  for (const auto& j : io::read_jsonl(profiles)) {
    CostRow r;
    r.item_id = j.at("item_id").get<std::string>();
    r.candidate_id = j.at("candidate_id").get<std::string>();
    r.method = alternatives::method_from_string(j.at("method").get<std::string>());
    r.in_goal_directed = j.at("in_goal_directed").get<bool>();
    r.in_goal_agnostic = j.at("in_goal_agnostic").get<bool>();
    const auto context = j.at("context").get<std::string>();
    const auto continuation = j.at("continuation").get<std::string>();
    try {
      const auto ctx = costs::profile_from_json(j.at("context_profile"));
      const auto cont = costs::profile_from_json(j.at("continuation_profile"));
      r.bundle = costs::cost_bundle(cont, costs::concat_full(ctx, cont), continuation);
      r.lexical_overlap = alternatives::lexical_overlap(context, continuation, cfg.overlap_mode);
    } catch (const InvalidInput& e) {
      dropped.row({r.item_id, r.candidate_id, e.what()});
      continue;
    }
    rows.push_back(to_json(r));
    csv.row({r.item_id, r.candidate_id, std::string(alternatives::to_string(r.method)),
             r.in_goal_directed ? "true" : "false", r.in_goal_agnostic ? "true" : "false",
             io::fmt_real(r.bundle.surprisal), r.bundle.uid_local ? io::fmt_real(*r.bundle.uid_local) : "",
             io::fmt_real(r.bundle.uid_global), std::to_string(r.bundle.length_words),
             io::fmt_real(r.lexical_overlap)});
  }
  io::write_jsonl(out, rows);
  const auto dir = out.parent_path();
  io::write_file(dir / "costs.csv", csv.str());
  io::write_file(dir / "cost_dropped.csv", dropped.str());
  return {out, dir / "costs.csv", dir / "cost_dropped.csv"};
}

namespace {

json stratify_pool(const std::vector<costs::CostBundle>& human, const std::vector<align::Candidate>& pool,
                   std::uint64_t seed) {
  const auto result = align::stratified_sample(human, pool, seed);
  json j = align::to_json(result);
  std::vector<costs::CostBundle> generated;
  for (const auto& c : pool) generated.push_back(c.bundle);
  auto tests = [&](auto&& fn) -> json {
    try {
      return align::to_json(fn());
    } catch (const InsufficientData& e) {
      return error_json(e);
    }
  };
  j["distribution_tests"] = {
      {"before", tests([&] { return align::distribution_tests(human, generated); })},
      {"after", tests([&] { return align::verify_alignment(result, human, pool); })}};
  return j;
}

/// Selected candidate ids for a condition, or nullopt when unstratified.
std::optional<std::set<std::string>> selection_for(const json& strat, Condition c) {
  if (strat.is_null() || strat.value("mode", "none") == "none") return std::nullopt;
  const auto& results = strat.at("results");
  const std::string key = results.contains("joint") ? "joint" : std::string(choice::to_string(c));
  const auto ids = results.at(key).at("selected_candidate_ids").get<std::vector<std::string>>();
  return std::set<std::string>(ids.begin(), ids.end());
}

}  // namespace

Written run_stratify(const config::PipelineConfig& cfg, const fs::path& costs_path, std::uint64_t seed,
                     const fs::path& out) {
  const auto rows = read_cost_rows(costs_path);
  std::vector<costs::CostBundle> human;
  for (const auto& r : rows) {
    if (r.is_human()) human.push_back(r.bundle);
  }
  auto pool_for = [&](std::optional<Condition> c) {
    std::vector<align::Candidate> pool;
    for (const auto& r : rows) {
      if (r.is_human()) continue;
      const bool member = c ? in_condition(r, *c) : (r.in_goal_directed || r.in_goal_agnostic);
      if (member) pool.push_back({r.candidate_id, r.bundle});
    }
    return pool;
  };
  json doc = {{"mode", config::to_string(cfg.stratification)}, {"seed", seed}, {"results", json::object()}};
  if (cfg.stratification == config::Stratification::joint) {
    doc["results"]["joint"] = stratify_pool(human, pool_for(std::nullopt), seed);
  } else if (cfg.stratification == config::Stratification::per_condition) {
    for (auto c : kConditions) doc["results"][std::string(choice::to_string(c))] = stratify_pool(human, pool_for(c), seed);
  }
  io::write_file(out, io::dump_pretty(doc));
  return {out};
}

namespace {

json rank1_json(const choice::Rank1Row& r) {
  return {{"cost", r.cost},
          {"condition", choice::to_string(r.condition)},
          {"n_sets", r.n_sets},
          {"n_rank1", r.n_rank1},
          {"n_ties", r.n_ties},
          {"share", r.share},
          {"baseline_candidates", r.baseline_candidates},
          {"baseline_alternatives", r.baseline_alternatives},
          {"multiplier_candidates", r.multiplier_candidates},
          {"multiplier_alternatives", r.multiplier_alternatives},
          {"p_candidates", r.p_candidates},
          {"p_alternatives", r.p_alternatives}};
}

Written analyze_rank(const config::PipelineConfig& cfg, const std::vector<CostRow>& rows, const json& strat,
                     const fs::path& dir) {
  const bool by_candidates = cfg.chance_convention == choice::ChanceConvention::candidates;
  io::CsvWriter table({"cost", "condition", "n_sets", "n_rank1", "rank1_pct", "baseline_pct", "multiplier", "p_value",
                       "chance_convention", "baseline_candidates_pct", "multiplier_candidates", "p_candidates",
                       "baseline_alternatives_pct", "multiplier_alternatives", "p_alternatives", "n_ties",
                       "tie_policy"});
  io::CsvWriter hist({"cost", "condition", "rank", "count", "share"});
  json out = {{"chance_convention", choice::to_string(cfg.chance_convention)},
              {"tie_policy", cfg.tie_policy},
              {"rows", json::array()}};
  for (const auto& cost : kCostNames) {
    for (auto c : kConditions) {
      const auto sel = selection_for(strat, c);
      const auto sets = build_choice_sets(rows, cost, c, sel ? &*sel : nullptr);
      if (sets.empty()) continue;
      const auto r = choice::rank1_summary(cost, c, sets);
      out["rows"].push_back(rank1_json(r));
      const double base = by_candidates ? r.baseline_candidates : r.baseline_alternatives;
      table.row({cost, std::string(choice::to_string(c)), std::to_string(r.n_sets), std::to_string(r.n_rank1),
                 io::fmt_real(100.0 * r.share, 2), io::fmt_real(100.0 * base, 2),
                 io::fmt_real(by_candidates ? r.multiplier_candidates : r.multiplier_alternatives, 3),
                 io::fmt_sci(by_candidates ? r.p_candidates : r.p_alternatives),
                 std::string(choice::to_string(cfg.chance_convention)), io::fmt_real(100.0 * r.baseline_candidates, 2),
                 io::fmt_real(r.multiplier_candidates, 3), io::fmt_sci(r.p_candidates),
                 io::fmt_real(100.0 * r.baseline_alternatives, 2), io::fmt_real(r.multiplier_alternatives, 3),
                 io::fmt_sci(r.p_alternatives), std::to_string(r.n_ties), cfg.tie_policy});
      const auto h = choice::rank_histogram(sets);
      for (std::size_t k = 0; k < h.size(); ++k) {
        hist.row({cost, std::string(choice::to_string(c)), std::to_string(k + 1), std::to_string(h[k]),
                  io::fmt_real(static_cast<double>(h[k]) / static_cast<double>(sets.size()))});
      }
    }
  }

  // Cost distributions per set type, for the human/generated alignment plot.
  const auto sel_gd = selection_for(strat, Condition::goal_directed);
  const auto sel_ga = selection_for(strat, Condition::goal_agnostic);
  io::CsvWriter dist({"set_type", "candidate_id", "surprisal", "uid_local", "uid_global", "length"});
  auto add = [&](const std::string& type, const CostRow& r) {
    dist.row({type, r.candidate_id, io::fmt_real(r.bundle.surprisal),
              r.bundle.uid_local ? io::fmt_real(*r.bundle.uid_local) : "", io::fmt_real(r.bundle.uid_global),
              std::to_string(r.bundle.length_words)});
  };
  for (const auto& r : rows) {
    if (r.is_human()) {
      add("human", r);
      continue;
    }
    if (r.in_goal_directed && (!sel_gd || sel_gd->count(r.candidate_id))) add("goal_directed", r);
    if (r.in_goal_agnostic && (!sel_ga || sel_ga->count(r.candidate_id))) add("goal_agnostic", r);
  }

  io::write_file(dir / "rank_summary.csv", table.str());
  io::write_file(dir / "rank_summary.json", io::dump_pretty(out));
  io::write_file(dir / "rank_histogram.csv", hist.str());
  io::write_file(dir / "cost_distribution.csv", dist.str());
  return {dir / "rank_summary.csv", dir / "rank_summary.json", dir / "rank_histogram.csv",
          dir / "cost_distribution.csv"};
}

Written analyze_pairwise(const config::PipelineConfig& cfg, const std::vector<CostRow>& rows, const json& strat,
                         const fs::path& dir) {
  json fits = json::object();
  for (const auto& cost : kCostNames) {
    std::vector<choice::PairwiseRow> design;
    try {
      std::vector<choice::ChoiceSet> pooled;
      for (auto c : kConditions) {
        const auto sel = selection_for(strat, c);
        auto sets = build_choice_sets(rows, cost, c, sel ? &*sel : nullptr);
        if (cfg.standardization == config::Standardization::per_condition) {
          auto part = choice::build_pairwise(sets);
          design.insert(design.end(), part.begin(), part.end());
        } else {
          pooled.insert(pooled.end(), sets.begin(), sets.end());
        }
      }
      if (cfg.standardization == config::Standardization::pooled) design = choice::build_pairwise(pooled);
      fits[cost] = choice::to_json(choice::fit_pairwise_logit(design));
      fits[cost]["n_rows"] = design.size();
    } catch (const Error& e) {
      fits[cost] = error_json(e);
    }
  }
  const json out = {{"standardization", config::to_string(cfg.standardization)},
                    {"design", "y ~ 1 + delta + gd + delta:gd, both orientations per pair"},
                    {"config", cfg.echo()},
                    {"fits", fits}};
  io::write_file(dir / "pairwise_fit.json", io::dump_pretty(out));
  return {dir / "pairwise_fit.json"};
}

/// Z-scores costs of the given sets using mean/SD over their unique
/// candidates.
void standardize_unique(std::vector<std::vector<choice::ChoiceSet>*> groups) {
  std::map<std::string, double> unique;
  for (auto* g : groups) {
    for (const auto& s : *g) {
      for (const auto& c : s.candidates) unique.emplace(c.candidate_id, c.cost);
    }
  }
  if (unique.empty()) return;
  double mu = 0.0;
  for (const auto& [id, v] : unique) mu += v;
  mu /= static_cast<double>(unique.size());
  double ss = 0.0;
  for (const auto& [id, v] : unique) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / static_cast<double>(unique.size()));
  if (!(sd > 0.0)) throw DegenerateVariance("all costs are equal");
  for (auto* g : groups) {
    for (auto& s : *g) {
      for (auto& c : s.candidates) c.cost = (c.cost - mu) / sd;
    }
  }
}

Written analyze_condlogit(const config::PipelineConfig& cfg, const std::vector<CostRow>& rows, const json& strat,
                          const fs::path& dir) {
  json out_rows = json::array();
  for (const auto& cost : kCostNames) {
    std::vector<std::vector<choice::ChoiceSet>> by_cond;
    for (auto c : kConditions) {
      const auto sel = selection_for(strat, c);
      by_cond.push_back(build_choice_sets(rows, cost, c, sel ? &*sel : nullptr));
    }
    std::optional<std::string> std_error;
    try {
      if (cfg.standardization == config::Standardization::pooled) {
        standardize_unique({&by_cond[0], &by_cond[1]});
      } else {
        for (auto& sets : by_cond) standardize_unique({&sets});
      }
    } catch (const Error& e) {
      std_error = e.what();
    }
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& sets = by_cond[k];
      json row = {{"cost", cost}, {"condition", choice::to_string(kConditions[k])}, {"n_sets", sets.size()}};
      if (sets.empty()) {
        row["fit"] = {{"error", "InsufficientData"}, {"message", "no choice sets"}};
      } else if (std_error) {
        row["fit"] = {{"error", "DegenerateVariance"}, {"message", *std_error}};
      } else {
        try {
          row["fit"] = choice::to_json(choice::fit_conditional_logit(sets));
        } catch (const Error& e) {
          row["fit"] = error_json(e);
        }
        row["uniform"] = choice::to_json(choice::condlogit_at(sets, 0.0, "uniform_baseline"));
      }
      out_rows.push_back(row);
    }
  }
  const json out = {{"standardization", config::to_string(cfg.standardization)},
                    {"config", cfg.echo()},
                    {"rows", out_rows}};
  io::write_file(dir / "condlogit_fit.json", io::dump_pretty(out));
  return {dir / "condlogit_fit.json"};
}

Written analyze_diffs(const config::PipelineConfig& cfg, const std::vector<CostRow>& rows, const json& strat,
                      const fs::path& dir) {
  io::CsvWriter csv({"cost", "condition", "n", "mean_diff", "sd_diff", "median_diff", "t", "p_less"});
  json out = {{"seed", cfg.paired_diff_seed}, {"test", "one-sided t-test, mean(human - alternative) < 0"},
              {"rows", json::array()}};
  for (auto c : kConditions) {
    const auto sel = selection_for(strat, c);
    std::vector<stats::DiffContext> contexts;
    std::map<std::string, std::size_t> index;
    for (const auto& r : rows) {
      auto [it, inserted] = index.try_emplace(r.item_id, contexts.size());
      if (inserted) contexts.emplace_back();
      std::vector<std::optional<double>> v;
      for (const auto& cost : kCostNames) v.push_back(cost_value(r.bundle, cost));
      if (r.is_human()) {
        contexts[it->second].human = v;
      } else if (in_condition(r, c) && (!sel || sel->count(r.candidate_id))) {
        contexts[it->second].alternatives.push_back(v);
      }
    }
    std::erase_if(contexts, [](const stats::DiffContext& d) { return d.human.empty(); });
    for (const auto& d : stats::paired_diff_analysis(kCostNames, choice::to_string(c), contexts, cfg.paired_diff_seed)) {
      csv.row({d.cost, d.condition, std::to_string(d.differences.n), io::fmt_real(d.differences.mean),
               io::fmt_real(d.differences.sd), io::fmt_real(d.differences.median), io::fmt_real(d.t, 3),
               io::fmt_sci(d.p)});
      out["rows"].push_back({{"cost", d.cost},
                             {"condition", d.condition},
                             {"n", d.differences.n},
                             {"mean_diff", d.differences.mean},
                             {"sd_diff", d.differences.sd},
                             {"median_diff", d.differences.median},
                             {"t", d.t},
                             {"p", d.p}});
    }
  }
  io::write_file(dir / "diffs.csv", csv.str());
  io::write_file(dir / "diffs.json", io::dump_pretty(out));
  return {dir / "diffs.csv", dir / "diffs.json"};
}

Written analyze_overlap(const std::vector<CostRow>& rows, const fs::path& dir) {
  io::CsvWriter csv({"method", "n", "mean", "sd"});
  for (auto m : {Method::human, Method::no_history, Method::prev_utterance, Method::full_history, Method::paraphrase}) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.method == m) v.push_back(r.lexical_overlap);
    }
    const auto s = stats::summarize(v);
    csv.row({std::string(alternatives::to_string(m)), std::to_string(s.n), io::fmt_real(s.mean), io::fmt_real(s.sd)});
  }
  io::write_file(dir / "lexical_overlap.csv", csv.str());
  return {dir / "lexical_overlap.csv"};
}

}  // namespace

Written run_analyze(const config::PipelineConfig& cfg, Analysis what, const fs::path& costs_path,
                    const fs::path& stratification, const fs::path& out_dir) {
  const auto rows = read_cost_rows(costs_path);
  json strat;
  if (!stratification.empty()) strat = json::parse(io::read_file(stratification));
  switch (what) {
    case Analysis::rank: return analyze_rank(cfg, rows, strat, out_dir);
    case Analysis::pairwise: return analyze_pairwise(cfg, rows, strat, out_dir);
    case Analysis::condlogit: return analyze_condlogit(cfg, rows, strat, out_dir);
    case Analysis::diffs: return analyze_diffs(cfg, rows, strat, out_dir);
    case Analysis::overlap: return analyze_overlap(rows, out_dir);
  }
  return {};
}

Written run_report(const fs::path& analysis_dir, const fs::path& out_dir) {
  return report::write_report(analysis_dir, out_dir);
}

// --- orchestration -------------------------------------------------------------

namespace {

struct Stage {
  std::string name;
  std::vector<fs::path> inputs;
  json params;
  bool uses_gateway = false;
  std::function<Written()> run;
};

std::string rel(const fs::path& p, const fs::path& root) {
  const auto r = p.lexically_relative(root);
  if (!r.empty() && *r.begin() != "..") return r.generic_string();
  return p.filename().generic_string();
}

}  // namespace

RunSummary run_pipeline(const config::PipelineConfig& cfg, const std::function<void(const std::string&)>& log) {
  config::validate(cfg);
  const Layout L{cfg.out_dir};
  fs::create_directories(L.root);
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  std::unique_ptr<gateway::Gateway> gw;
  auto gateway = [&]() -> gateway::Gateway& {
    if (!gw) gw = gateway::make_gateway(cfg.gateway);
    return *gw;
  };
  const auto& gcfg = cfg.gateway;
  const json scorer_params = {{"model_id", gcfg.scorer_model_id}, {"context_window", gcfg.context_window},
                              {"separator", gcfg.separator}};
  const json generator_params = {{"model_id", gcfg.generator_model_id}, {"temperature", gcfg.temperature},
                                 {"prompt_version", prompts::kPromptVersion},
                                 {"refusal_retries", gcfg.max_refusal_retries}};

  const std::vector<Stage> stages = {
      {"preprocess",
       {cfg.transcripts, cfg.annotations},
       {{"history_token_budget", cfg.history_token_budget}, {"cleaning_rules_version", corpus::kCleaningRulesVersion},
        {"scorer", scorer_params}},
       true,
       [&] { return run_preprocess(cfg, gateway(), L.items()); }},
      {"generate",
       {L.items()},
       {{"n", cfg.n_alternatives}, {"generator", generator_params}},
       true,
       [&] { return run_generate(gateway(), L.items(), L.generated(), cfg.n_alternatives); }},
      {"judge",
       {L.items(), L.generated()},
       {{"generator", generator_params}},
       true,
       [&] { return run_judge(gateway(), L.items(), L.generated(), L.alternatives()); }},
      {"score",
       {L.items(), L.alternatives()},
       {{"scorer", scorer_params}, {"fold_punctuation", cfg.fold_punctuation}},
       true,
       [&] { return run_score(cfg, gateway(), L.items(), L.alternatives(), L.profiles()); }},
      {"cost",
       {L.profiles()},
       {{"unit", costs::kSurprisalUnit}, {"lexical_overlap", cfg.echo()["analysis"]["lexical_overlap"]}},
       false,
       [&] { return run_cost(cfg, L.profiles(), L.costs()); }},
      {"stratify",
       {L.costs()},
       {{"seed", cfg.stratify_seed}, {"mode", config::to_string(cfg.stratification)}},
       false,
       [&] { return run_stratify(cfg, L.costs(), cfg.stratify_seed, L.stratification()); }},
      {"analyze",
       {L.costs(), L.stratification()},
       cfg.echo(),
       false,
       [&] {
         fs::create_directories(L.analysis());
         Written all;
         for (auto a : kAllAnalyses) {
           auto w = run_analyze(cfg, a, L.costs(), L.stratification(), L.analysis());
           all.insert(all.end(), w.begin(), w.end());
         }
         return all;
       }},
      {"report",
       {},
       json::object(),
       false,
       [&] { return run_report(L.analysis(), L.report()); }},
  };

  json previous;
  if (fs::exists(L.manifest())) {
    try {
      previous = json::parse(io::read_file(L.manifest()));
    } catch (const json::exception&) {
      previous = json();
    }
  }
  auto previous_stage = [&](const std::string& name) -> json {
    if (!previous.is_object() || !previous.contains("stages")) return json();
    for (const auto& s : previous.at("stages")) {
      if (s.value("name", "") == name) return s;
    }
    return json();
  };

  RunSummary summary;
  json stage_entries = json::array();
  json last_outputs = json::object();  // the report stage hashes the analysis outputs
  for (const auto& stage : stages) {
    json inputs = json::object();
    auto input_paths = stage.inputs;
    if (stage.name == "report") {
      for (auto it = last_outputs.begin(); it != last_outputs.end(); ++it) input_paths.push_back(L.root / it.key());
    }
    for (const auto& p : input_paths) {
      if (!fs::exists(p)) throw MissingInput("stage " + stage.name + ": input " + p.string() + " not found");
      inputs[rel(p, L.root)] = sha256_file(p);
    }
    if (stage.uses_gateway && !gcfg.fixtures_path.empty() && fs::exists(gcfg.fixtures_path)) {
      inputs["fixtures:" + gcfg.fixtures_path.filename().string()] = sha256_file(gcfg.fixtures_path);
    }
    const json key_doc = {{"stage", stage.name}, {"params", stage.params}, {"inputs", inputs},
                          {"tool_version", kToolVersion}};
    const std::string hash = sha256_hex(key_doc.dump());

    const bool cacheable = !(stage.uses_gateway && gcfg.mode == gateway::Mode::live);
    json prev = previous_stage(stage.name);
    bool fresh = cacheable && prev.is_object() && prev.value("hash", "") == hash && prev.contains("outputs");
    if (fresh) {
      for (auto it = prev.at("outputs").begin(); it != prev.at("outputs").end() && fresh; ++it) {
        const auto p = L.root / it.key();
        fresh = fs::exists(p) && sha256_file(p) == it.value().get<std::string>();
      }
    }
    json entry;
    if (fresh) {
      entry = prev;
      summary.skipped.push_back(stage.name);
      say("[skip] " + stage.name);
    } else {
      say("[run]  " + stage.name);
      Written written;
      try {
        written = stage.run();
      } catch (const Error& e) {
        say("stage " + stage.name + " failed: " + e.what());
        throw;
      }
      if (stage.uses_gateway && gw) gw->flush();
      json outputs = json::object();
      for (const auto& p : written) outputs[rel(p, L.root)] = sha256_file(p);
      entry = {{"name", stage.name}, {"hash", hash}, {"inputs", inputs}, {"outputs", outputs}};
      summary.executed.push_back(stage.name);
    }
    last_outputs = entry.at("outputs");
    stage_entries.push_back(entry);
  }

  summary.manifest = {{"tool", "prodchoice"},
                      {"tool_version", kToolVersion},
                      {"versions",
                       {{"cleaning_rules", corpus::kCleaningRulesVersion},
                        {"prompts", prompts::kPromptVersion},
                        {"surprisal_unit", costs::kSurprisalUnit}}},
                      {"mode", gateway::to_string(gcfg.mode)},
                      {"config", cfg.echo()},
                      {"stages", stage_entries}};
  io::write_file(L.manifest(), io::dump_pretty(summary.manifest));
  return summary;
}

}  // namespace prodchoice::pipeline
