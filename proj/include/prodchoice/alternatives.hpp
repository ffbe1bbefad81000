#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prodchoice/corpus.hpp"
#include "prodchoice/gateway.hpp"
#include "prodchoice/prompts.hpp"

namespace prodchoice::alternatives {

enum class Method { no_history, prev_utterance, full_history, paraphrase, human };
std::string_view to_string(Method m) noexcept;
Method method_from_string(std::string_view s);
Method method_for(prompts::HistoryCondition c) noexcept;
bool is_history_method(Method m) noexcept;

struct AlternativeRecord {
  std::string item_id;
  std::string candidate_id;
  std::string continuation;
  Method method = Method::human;
  bool in_goal_directed = false;
  bool in_goal_agnostic = false;
  std::optional<gateway::Label> judge_label;
};

struct AlternativeSetSummary {
  std::string item_id;
  std::size_t n_paraphrases = 0;  // goal-directed before judging
  std::size_t n_goal_directed = 0;
  std::size_t n_goal_agnostic = 0;
  bool dropped = false;
  std::string reason;
};

inline constexpr int kDefaultAlternatives = 10;

std::string candidate_id(std::string_view item_id, Method m, std::size_t k);

/// The observed continuation; the reference, in neither alternative set.
AlternativeRecord human_record(const corpus::ChoiceItem& item);

/// Continuation part of a completion of `context`. A completion restating the
/// context has it stripped; one that starts like the context but diverges, or
/// leaves nothing after the context, throws PrefixViolation.
std::string extract_continuation(std::string_view completion, std::string_view context);

/// Splits a paraphrase list reply into sentences, dropping blank lines and
/// list numbering ("1.", "2)", "-").
std::vector<std::string> parse_paraphrase_list(std::string_view reply);

std::vector<AlternativeRecord> gen_goal_agnostic(gateway::Gateway& gw, const corpus::ChoiceItem& item,
                                                 prompts::HistoryCondition condition,
                                                 int n = kDefaultAlternatives);

/// n unique paraphrase continuations, re-requesting once when short. Throws
/// InsufficientParaphrases if still fewer than n.
std::vector<AlternativeRecord> gen_goal_directed(gateway::Gateway& gw, const corpus::ChoiceItem& item,
                                                 int n = kDefaultAlternatives);

struct ItemAlternatives {
  std::vector<AlternativeRecord> records;  // human first; empty when dropped
  AlternativeSetSummary summary;
};

/// All three history conditions plus paraphrases for one item. Refusals,
/// prefix violations and short paraphrase lists drop the item.
ItemAlternatives generate_for_item(gateway::Gateway& gw, const corpus::ChoiceItem& item,
                                   int n = kDefaultAlternatives);

/// generate_for_item over all items with the gateway's bounded concurrency;
/// results keep item order.
std::vector<ItemAlternatives> generate_all(gateway::Gateway& gw, const std::vector<corpus::ChoiceItem>& items,
                                           int n = kDefaultAlternatives);

/// Applies one verdict: paraphrases judged no leave the goal-directed set,
/// history completions judged yes join it. No verdict excludes the record
/// from goal-directed analyses.
void apply_verdict(AlternativeRecord& record, std::optional<gateway::Label> label);

/// Judges every generated record against the human full sentence.
std::vector<AlternativeRecord> reclassify(gateway::Gateway& gw, std::vector<AlternativeRecord> records,
                                          const corpus::ChoiceItem& item);

/// Generated records whose continuation equals the human's but were not
/// judged paraphrases.
std::vector<std::string> judge_inconsistencies(const std::vector<AlternativeRecord>& records);

AlternativeSetSummary summarize(const std::string& item_id, const std::vector<AlternativeRecord>& records);

struct GoalMatch {
  Method method = Method::no_history;
  std::size_t n = 0;
  std::size_t n_yes = 0;
  double proportion = 0.0;
};

struct GoalMatchTable {
  std::vector<GoalMatch> rows;  // no_history, prev_utterance, full_history
  bool increasing_with_history = false;
};

GoalMatchTable goal_match_proportions(const std::vector<AlternativeRecord>& records);

enum class OverlapMode { types, tokens };

/// Share of continuation words (types by default) that also occur in the
/// context, case-insensitive, punctuation excluded.
double lexical_overlap(std::string_view context, std::string_view continuation,
                       OverlapMode mode = OverlapMode::types);

nlohmann::json to_json(const AlternativeRecord& r);
AlternativeRecord alternative_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AlternativeSetSummary& s);

std::string summary_csv(const std::vector<AlternativeSetSummary>& summaries);

}  // namespace prodchoice::alternatives
