#include "prodchoice/corpus.hpp"

#include <algorithm>
#include <array>
#include <regex>

#include "prodchoice/error.hpp"
#include "prodchoice/text.hpp"

namespace prodchoice::corpus {

using nlohmann::json;

std::string_view to_string(Speaker s) noexcept { return s == Speaker::A ? "A" : "B"; }

Speaker speaker_from_string(std::string_view s) {
  if (s == "A" || s == "a") return Speaker::A;
  if (s == "B" || s == "b") return Speaker::B;
  throw InvalidInput("unknown speaker '" + std::string(s) + "'");
}

std::string Turn::text() const { return text::join(utterances); }

std::string_view to_string(ExclusionReason r) noexcept {
  switch (r) {
    case ExclusionReason::not_first_in_turn: return "not_first_in_turn";
    case ExclusionReason::no_preceding_turn: return "no_preceding_turn";
    case ExclusionReason::wrong_act: return "wrong_act";
    case ExclusionReason::too_short: return "too_short";
    case ExclusionReason::too_long: return "too_long";
    case ExclusionReason::no_choice_point: return "no_choice_point";
    case ExclusionReason::short_context: return "short_context";
    case ExclusionReason::empty_continuation: return "empty_continuation";
  }
  return "unknown";
}

std::string annotation_key(std::string_view dialogue_id, int raw_turn_index) {
  return std::string(dialogue_id) + ":" + std::to_string(raw_turn_index);
}

namespace {

bool is_filler(std::string_view token) {
  const auto core = text::word_core(token);
  return core == "um" || core == "uh";
}

bool is_fragment(std::string_view token) { return !token.empty() && token.back() == '-'; }

bool is_markup_only(std::string_view token) {
  return std::all_of(token.begin(), token.end(), [](char c) {
    return c == '+' || c == '/' || c == '#' || c == '(' || c == ')';
  });
}

}  // namespace

std::string clean_utterance(std::string_view raw) {
  // Angle-bracket annotations, e.g. <<motorcycle noise>>, <laughter>.
  static const std::regex kDoubleTag("<<[^>]*>>");
  static const std::regex kTag("<[^>]*>");
  // Disfluency bracket openers such as "{F " and "{D ".
  static const std::regex kBraceOpener("\\{[A-Za-z](?=\\s|$)");
  static const std::regex kBrackets("[{}\\[\\]]");

  std::string s(raw);
  s = std::regex_replace(s, kDoubleTag, " ");
  s = std::regex_replace(s, kTag, " ");
  s = std::regex_replace(s, kBraceOpener, " ");
  s = std::regex_replace(s, kBrackets, " ");

  std::vector<std::string> kept;
  for (auto& tok : text::split_ws(s)) {
    if (is_fragment(tok) || is_markup_only(tok) || is_filler(tok)) continue;
    // Adjacent repeats collapse to the first occurrence.
    if (!kept.empty() && text::to_lower(kept.back()) == text::to_lower(tok)) continue;
    kept.push_back(std::move(tok));
  }
  return text::join(kept);
}

std::size_t word_count(std::string_view cleaned) { return text::split_ws(cleaned).size(); }

std::vector<Turn> merge_and_filter(const std::vector<RawUtterance>& dialogue) {
  std::vector<Turn> turns;
  for (std::size_t i = 0; i < dialogue.size(); ++i) {
    const auto& u = dialogue[i];
    if (i > 0 && (u.turn_index <= dialogue[i - 1].turn_index ||
                  u.dialogue_id != dialogue[i - 1].dialogue_id)) {
      throw InvalidInput("dialogue " + u.dialogue_id +
                         ": utterances must be sorted by strictly increasing turn_index");
    }
    std::string cleaned = clean_utterance(u.text);
    if (word_count(cleaned) <= 3) continue;  // backchannel
    if (!turns.empty() && turns.back().speaker == u.speaker) {
      auto& t = turns.back();
      t.utterances.push_back(std::move(cleaned));
      t.act_tags.push_back(u.act_tag);
      t.source_indices.push_back(u.turn_index);
      continue;
    }
    Turn t;
    t.dialogue_id = u.dialogue_id;
    t.speaker = u.speaker;
    t.utterances.push_back(std::move(cleaned));
    t.act_tags.push_back(u.act_tag);
    t.source_indices.push_back(u.turn_index);
    t.turn_index = static_cast<int>(turns.size());
    turns.push_back(std::move(t));
  }
  if (turns.empty()) {
    throw EmptyDialogue(dialogue.empty() ? std::string("no utterances")
                                         : "dialogue " + dialogue.front().dialogue_id);
  }
  return turns;
}

std::vector<std::string> first_sentence(std::string_view text) {
  std::vector<std::string> words;
  for (auto& w : text::split_ws(text)) {
    const char last = w.back();
    words.push_back(std::move(w));
    if (last == '.' || last == '?' || last == '!') break;
  }
  return words;
}

ActClass classify_act(std::string_view act_tag) {
  const auto tag = text::to_lower(text::trim(act_tag));
  if (tag == "statement") return ActClass::statement;
  if (tag == "question") return ActClass::question;
  // SWDA-style codes: sd, sv, s^e ... are statements; qy, qw, qo, qh ... questions.
  if (!tag.empty() && tag[0] == 's') return ActClass::statement;
  if (!tag.empty() && tag[0] == 'q') return ActClass::question;
  return ActClass::other;
}

SelectionResult select_targets(const std::vector<Turn>& turns,
                               const ChoicePointAnnotations& annotations) {
  SelectionResult result;
  auto exclude = [&](ExclusionReason r) { ++result.excluded[r]; };

  for (const auto& turn : turns) {
    result.input_utterances += turn.utterances.size();
    for (std::size_t k = 1; k < turn.utterances.size(); ++k) {
      exclude(ExclusionReason::not_first_in_turn);
    }
    if (turn.utterances.empty()) continue;

    if (turn.turn_index == 0) {
      exclude(ExclusionReason::no_preceding_turn);
      continue;
    }
    const auto& act = turn.act_tags.front();
    if (classify_act(act) == ActClass::other) {
      exclude(ExclusionReason::wrong_act);
      continue;
    }
    const auto words = first_sentence(turn.utterances.front());
    if (words.size() < 10) {
      exclude(ExclusionReason::too_short);
      continue;
    }
    if (words.size() > 30) {
      exclude(ExclusionReason::too_long);
      continue;
    }
    const auto it = annotations.find(annotation_key(turn.dialogue_id, turn.source_indices.front()));
    if (it == annotations.end() || it->second < 0 ||
        static_cast<std::size_t>(it->second) >= words.size()) {
      exclude(ExclusionReason::no_choice_point);
      continue;
    }
    const auto split = static_cast<std::size_t>(it->second) + 1;
    if (split < 3) {
      exclude(ExclusionReason::short_context);
      continue;
    }
    if (split == words.size()) {
      exclude(ExclusionReason::empty_continuation);
      continue;
    }

    ChoiceItem item;
    item.item_id = it->first;
    item.dialogue_id = turn.dialogue_id;
    item.turn_index = turn.turn_index;
    item.speaker = turn.speaker;
    item.choice_point_index = it->second;
    item.context = text::join({words.begin(), words.begin() + static_cast<std::ptrdiff_t>(split)});
    item.human_continuation =
        text::join({words.begin() + static_cast<std::ptrdiff_t>(split), words.end()});
    item.act_tag = act;
    result.items.push_back(std::move(item));
  }
  return result;
}

std::string render_history(const std::vector<Turn>& turns, std::size_t first, std::size_t last) {
  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    if (!out.empty()) out += '\n';
    out += to_string(turns[i].speaker);
    out += ": ";
    out += turns[i].text();
  }
  return out;
}

ChoiceItem attach_history(ChoiceItem item, const std::vector<Turn>& dialogue,
                          std::size_t token_budget, const TokenCounter& count_tokens) {
  if (token_budget == 0) throw InvalidInput("token_budget must be positive");
  const auto pos = std::find_if(dialogue.begin(), dialogue.end(),
                                [&](const Turn& t) { return t.turn_index == item.turn_index; });
  if (pos == dialogue.end()) throw InvalidInput("item " + item.item_id + " not in dialogue");
  const auto idx = static_cast<std::size_t>(pos - dialogue.begin());
  if (idx == 0) throw NoPrecedingTurn(item.item_id);

  item.history_prev = dialogue[idx - 1].text();
  item.history_full.clear();
  // Grow the suffix one whole turn at a time until the budget would break.
  for (std::size_t first = idx; first-- > 0;) {
    auto candidate = render_history(dialogue, first, idx);
    if (count_tokens(candidate) > token_budget) break;
    item.history_full = std::move(candidate);
  }
  return item;
}

std::optional<int> heuristic_choice_point(const std::vector<std::string>& words) {
  static constexpr std::array<std::string_view, 40> kVerbs = {
      "think", "thought", "know", "knew",   "guess",  "said",   "say",   "says",
      "is",    "was",     "are",  "were",   "am",     "have",   "had",   "has",
      "went",  "go",      "goes", "like",   "liked",  "want",   "wanted", "bought",
      "get",   "got",     "mean", "believe", "feel",  "felt",   "found", "saw",
      "see",   "do",      "did",  "does",   "heard",  "told",   "confirmed", "jumped"};
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto core = text::word_core(words[i]);
    if (std::find(kVerbs.begin(), kVerbs.end(), core) != kVerbs.end()) return static_cast<int>(i);
  }
  return std::nullopt;
}

json to_json(const RawUtterance& u) {
  return json{{"dialogue_id", u.dialogue_id},
              {"turn_index", u.turn_index},
              {"speaker", to_string(u.speaker)},
              {"text", u.text},
              {"act_tag", u.act_tag}};
}

RawUtterance raw_utterance_from_json(const json& j) {
  try {
    RawUtterance u;
    const auto& id = j.at("dialogue_id");
    u.dialogue_id = id.is_string() ? id.get<std::string>() : id.dump();
    u.turn_index = j.at("turn_index").get<int>();
    if (u.turn_index < 0) throw InvalidInput("negative turn_index");
    u.speaker = speaker_from_string(j.at("speaker").get<std::string>());
    u.text = j.at("text").get<std::string>();
    u.act_tag = j.value("act_tag", "");
    return u;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad transcript row: ") + e.what());
  }
}

json to_json(const ChoiceItem& item) {
  return json{{"item_id", item.item_id},
              {"dialogue_id", item.dialogue_id},
              {"turn_index", item.turn_index},
              {"speaker", to_string(item.speaker)},
              {"context", item.context},
              {"human_continuation", item.human_continuation},
              {"choice_point_index", item.choice_point_index},
              {"history_prev", item.history_prev},
              {"history_full", item.history_full},
              {"act_tag", item.act_tag}};
}

ChoiceItem choice_item_from_json(const json& j) {
  try {
    ChoiceItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.dialogue_id = j.at("dialogue_id").get<std::string>();
    item.turn_index = j.at("turn_index").get<int>();
    item.speaker = speaker_from_string(j.at("speaker").get<std::string>());
    item.context = j.at("context").get<std::string>();
    item.human_continuation = j.at("human_continuation").get<std::string>();
    item.choice_point_index = j.at("choice_point_index").get<int>();
    item.history_prev = j.value("history_prev", "");
    item.history_full = j.value("history_full", "");
    item.act_tag = j.value("act_tag", "");
    return item;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad item row: ") + e.what());
  }
}

ChoicePointAnnotations annotations_from_jsonl(const std::vector<json>& rows) {
  ChoicePointAnnotations out;
  for (const auto& row : rows) {
    try {
      out[row.at("key").get<std::string>()] = row.at("choice_point_index").get<int>();
    } catch (const json::exception& e) {
      throw InvalidInput(std::string("bad annotation row: ") + e.what());
    }
  }
  return out;
}

std::vector<ChoiceItem> preprocess(const std::vector<RawUtterance>& utterances,
                                   const ChoicePointAnnotations& annotations,
                                   std::size_t token_budget, const TokenCounter& count_tokens,
                                   PreprocessStats* stats) {
  std::map<std::string, std::vector<RawUtterance>> dialogues;
  for (const auto& u : utterances) dialogues[u.dialogue_id].push_back(u);

  PreprocessStats local;
  local.raw_utterances = utterances.size();
  local.dialogues = dialogues.size();
  std::vector<ChoiceItem> out;
  for (auto& [id, rows] : dialogues) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawUtterance& a, const RawUtterance& b) { return a.turn_index < b.turn_index; });
    std::vector<Turn> turns;
    try {
      turns = merge_and_filter(rows);
    } catch (const EmptyDialogue&) {
      ++local.empty_dialogues;
      continue;
    }
    auto selected = select_targets(turns, annotations);
    local.turn_utterances += selected.input_utterances;
    for (const auto& [reason, n] : selected.excluded) local.excluded[reason] += n;
    for (auto& item : selected.items) {
      out.push_back(attach_history(std::move(item), turns, token_budget, count_tokens));
    }
  }
  local.items = out.size();
  if (stats) *stats = local;
  return out;
}

}  // namespace prodchoice::corpus
