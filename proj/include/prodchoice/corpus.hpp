#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prodchoice::corpus {

/// Bumped whenever the cleaning rule set changes so outputs can be diffed.
inline constexpr std::string_view kCleaningRulesVersion = "1";

enum class Speaker { A, B };
std::string_view to_string(Speaker s) noexcept;
Speaker speaker_from_string(std::string_view s);

struct RawUtterance {
  std::string dialogue_id;
  int turn_index = 0;
  Speaker speaker = Speaker::A;
  std::string text;
  std::string act_tag;
};

struct Turn {
  std::string dialogue_id;
  Speaker speaker = Speaker::A;
  std::vector<std::string> utterances;
  // Parallel to `utterances`: source act tag and raw turn index.
  std::vector<std::string> act_tags;
  std::vector<int> source_indices;
  int turn_index = 0;

  std::string text() const;
};

struct ChoiceItem {
  std::string item_id;
  std::string dialogue_id;
  int turn_index = 0;  // dense index of the turn in the merged dialogue
  Speaker speaker = Speaker::A;
  std::string context;
  std::string human_continuation;
  int choice_point_index = 0;
  std::string history_prev;
  std::string history_full;
  std::string act_tag;

  std::string full_sentence() const { return context + " " + human_continuation; }
};

enum class ExclusionReason {
  not_first_in_turn,
  no_preceding_turn,
  wrong_act,
  too_short,
  too_long,
  no_choice_point,
  short_context,
  empty_continuation,
};
std::string_view to_string(ExclusionReason r) noexcept;

/// Root-verb word offsets keyed by annotation_key().
using ChoicePointAnnotations = std::map<std::string, int>;

std::string annotation_key(std::string_view dialogue_id, int raw_turn_index);

struct SelectionResult {
  std::vector<ChoiceItem> items;
  std::map<ExclusionReason, std::size_t> excluded;
  std::size_t input_utterances = 0;
};

/// Token counter supplied by the scorer backend.
using TokenCounter = std::function<std::size_t(std::string_view)>;

inline constexpr std::size_t kDefaultTokenBudget = 1024;

// --- operations -----------------------------------------------------------

std::string clean_utterance(std::string_view raw);

/// Whitespace-delimited token count.
std::size_t word_count(std::string_view cleaned);

std::vector<Turn> merge_and_filter(const std::vector<RawUtterance>& dialogue);

/// Words of the first sentence of `text`, split after the first token that
/// ends in '.', '?' or '!'.
std::vector<std::string> first_sentence(std::string_view text);

enum class ActClass { statement, question, other };
ActClass classify_act(std::string_view act_tag);

SelectionResult select_targets(const std::vector<Turn>& turns,
                               const ChoicePointAnnotations& annotations);

ChoiceItem attach_history(ChoiceItem item, const std::vector<Turn>& dialogue,
                          std::size_t token_budget, const TokenCounter& count_tokens);

/// History rendering shared by generation prompts and scoring.
std::string render_history(const std::vector<Turn>& turns, std::size_t first, std::size_t last);

/// Closed-lexicon root-verb guesser. Test scaffolding only: real runs take
/// choice points from a parser via the annotation file.
std::optional<int> heuristic_choice_point(const std::vector<std::string>& words);

// --- JSONL schemas --------------------------------------------------------

nlohmann::json to_json(const RawUtterance& u);
RawUtterance raw_utterance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChoiceItem& item);
ChoiceItem choice_item_from_json(const nlohmann::json& j);

/// Reads annotation JSONL rows {"key": ..., "choice_point_index": ...}.
ChoicePointAnnotations annotations_from_jsonl(const std::vector<nlohmann::json>& rows);

struct PreprocessStats {
  std::size_t raw_utterances = 0;
  std::size_t dialogues = 0;
  std::size_t empty_dialogues = 0;
  std::size_t turn_utterances = 0;
  std::map<ExclusionReason, std::size_t> excluded;
  std::size_t items = 0;
};

/// Full corpus pass: group by dialogue, merge, select, attach history.
/// Output ordered by (dialogue_id, turn_index).
std::vector<ChoiceItem> preprocess(const std::vector<RawUtterance>& utterances,
                                   const ChoicePointAnnotations& annotations,
                                   std::size_t token_budget, const TokenCounter& count_tokens,
                                   PreprocessStats* stats = nullptr);

}  // namespace prodchoice::corpus
