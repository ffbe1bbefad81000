#include "prodchoice/alternatives.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "prodchoice/concurrency.hpp"
#include "prodchoice/error.hpp"
#include "prodchoice/io.hpp"
#include "prodchoice/text.hpp"

namespace prodchoice::alternatives {

using nlohmann::json;
using prompts::HistoryCondition;

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::no_history: return "no_history";
    case Method::prev_utterance: return "prev_utterance";
    case Method::full_history: return "full_history";
    case Method::paraphrase: return "paraphrase";
    case Method::human: return "human";
  }
  return "human";
}

Method method_from_string(std::string_view s) {
  for (auto m : {Method::no_history, Method::prev_utterance, Method::full_history, Method::paraphrase,
                 Method::human}) {
    if (s == to_string(m)) return m;
  }
  throw InvalidInput("unknown method '" + std::string(s) + "'");
}

Method method_for(HistoryCondition c) noexcept {
  switch (c) {
    case HistoryCondition::no_history: return Method::no_history;
    case HistoryCondition::prev_utterance: return Method::prev_utterance;
    case HistoryCondition::full_history: return Method::full_history;
  }
  return Method::no_history;
}

bool is_history_method(Method m) noexcept {
  return m == Method::no_history || m == Method::prev_utterance || m == Method::full_history;
}

std::string candidate_id(std::string_view item_id, Method m, std::size_t k) {
  return std::string(item_id) + "/" + std::string(to_string(m)) + "/" + std::to_string(k);
}

AlternativeRecord human_record(const corpus::ChoiceItem& item) {
  AlternativeRecord r;
  r.item_id = item.item_id;
  r.candidate_id = candidate_id(item.item_id, Method::human, 0);
  r.continuation = item.human_continuation;
  r.method = Method::human;
  return r;
}

std::string extract_continuation(std::string_view completion, std::string_view context) {
  std::string body = text::normalize_ws(completion);
  // Models often wrap the answer in quotes.
  if (body.size() >= 2 && body.front() == '"' && body.back() == '"') body = text::trim(body.substr(1, body.size() - 2));
  std::string rest;
  if (text::strip_prefix_loose(body, context, rest)) {
    if (rest.empty()) throw PrefixViolation("completion only repeats the context");
    return rest;
  }
  const auto cw = text::split_ws(context);
  const auto bw = text::split_ws(body);
  if (cw.size() >= 2 && bw.size() >= 2 && text::to_lower(cw[0]) == text::to_lower(bw[0]) &&
      text::to_lower(cw[1]) == text::to_lower(bw[1])) {
    throw PrefixViolation("completion restates a different context: '" + body + "'");
  }
  if (body.empty()) throw PrefixViolation("empty completion");
  return body;
}

std::vector<std::string> parse_paraphrase_list(std::string_view reply) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= reply.size()) {
    const auto nl = reply.find('\n', start);
    const auto end = nl == std::string_view::npos ? reply.size() : nl;
    std::string line = text::trim(reply.substr(start, end - start));
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
      line = text::trim(std::string_view(line).substr(i + 1));
    } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line = text::trim(std::string_view(line).substr(1));
    }
    if (!line.empty()) out.push_back(text::normalize_ws(line));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::vector<AlternativeRecord> gen_goal_agnostic(gateway::Gateway& gw, const corpus::ChoiceItem& item,
                                                 HistoryCondition condition, int n) {
  if (n < 1) throw InvalidInput("n must be positive");
  std::string history;
  if (condition == HistoryCondition::prev_utterance) history = item.history_prev;
  if (condition == HistoryCondition::full_history) history = item.history_full;
  gateway::GenRequest req;
  req.messages = prompts::completion_messages(condition, item.context, history, corpus::to_string(item.speaker));
  req.temperature = gw.config().temperature;
  req.n_samples = n;
  const auto completions = gw.generate(req);

  const Method method = method_for(condition);
  std::vector<AlternativeRecord> out;
  for (std::size_t k = 0; k < completions.size(); ++k) {
    AlternativeRecord r;
    r.item_id = item.item_id;
    r.candidate_id = candidate_id(item.item_id, method, k);
    r.continuation = extract_continuation(completions[k], item.context);
    r.method = method;
    r.in_goal_agnostic = true;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AlternativeRecord> gen_goal_directed(gateway::Gateway& gw, const corpus::ChoiceItem& item, int n) {
  if (n < 1) throw InvalidInput("n must be positive");
  std::vector<std::string> kept;
  std::set<std::string> seen;
  const std::string sentence = item.full_sentence();
  const int re_request_attempt = gw.config().max_refusal_retries + 1;
  for (int attempt : {0, re_request_attempt}) {
    gateway::GenRequest req;
    req.messages = prompts::paraphrase_messages(sentence, item.context, n);
    req.temperature = gw.config().temperature;
    req.attempt = attempt;
    const auto reply = gw.generate(req);
    for (const auto& line : parse_paraphrase_list(reply.front())) {
      std::string rest;
      if (!text::strip_prefix_loose(line, item.context, rest) || rest.empty()) continue;
      if (!seen.insert(text::to_lower(rest)).second) continue;
      kept.push_back(rest);
      if (kept.size() == static_cast<std::size_t>(n)) break;
    }
    if (kept.size() == static_cast<std::size_t>(n)) break;
  }
  if (kept.size() < static_cast<std::size_t>(n)) {
    throw InsufficientParaphrases(item.item_id + ": " + std::to_string(kept.size()) + " of " + std::to_string(n) +
                                  " valid unique paraphrases");
  }
  std::vector<AlternativeRecord> out;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    AlternativeRecord r;
    r.item_id = item.item_id;
    r.candidate_id = candidate_id(item.item_id, Method::paraphrase, k);
    r.continuation = kept[k];
    r.method = Method::paraphrase;
    r.in_goal_directed = true;
    out.push_back(std::move(r));
  }
  return out;
}

ItemAlternatives generate_for_item(gateway::Gateway& gw, const corpus::ChoiceItem& item, int n) {
  ItemAlternatives out;
  out.summary.item_id = item.item_id;
  std::vector<AlternativeRecord> records{human_record(item)};
  try {
    for (auto c : {HistoryCondition::no_history, HistoryCondition::prev_utterance, HistoryCondition::full_history}) {
      auto part = gen_goal_agnostic(gw, item, c, n);
      records.insert(records.end(), part.begin(), part.end());
    }
    auto para = gen_goal_directed(gw, item, n);
    records.insert(records.end(), para.begin(), para.end());
  } catch (const PrefixViolation& e) {
    out.summary.dropped = true;
    out.summary.reason = e.what();
  } catch (const InsufficientParaphrases& e) {
    out.summary.dropped = true;
    out.summary.reason = e.what();
  } catch (const RefusalDetected& e) {
    out.summary.dropped = true;
    out.summary.reason = e.what();
  }
  if (out.summary.dropped) return out;
  out.summary = summarize(item.item_id, records);
  out.records = std::move(records);
  return out;
}

std::vector<ItemAlternatives> generate_all(gateway::Gateway& gw, const std::vector<corpus::ChoiceItem>& items,
                                           int n) {
  auto outcomes = bounded_map(items.size(), gw.config().max_in_flight,
                              [&](std::size_t i) { return generate_for_item(gw, items[i], n); });
  std::vector<ItemAlternatives> out;
  out.reserve(items.size());
  for (auto& o : outcomes) out.push_back(o.get());
  return out;
}

void apply_verdict(AlternativeRecord& r, std::optional<gateway::Label> label) {
  if (r.method == Method::human) return;
  r.judge_label = label;
  const bool yes = label == gateway::Label::yes;
  if (r.method == Method::paraphrase) {
    r.in_goal_directed = yes;
  } else {
    r.in_goal_directed = yes;
    r.in_goal_agnostic = true;
  }
}

std::vector<AlternativeRecord> reclassify(gateway::Gateway& gw, std::vector<AlternativeRecord> records,
                                          const corpus::ChoiceItem& item) {
  const std::string human = item.full_sentence();
  auto verdicts = bounded_map(records.size(), gw.config().max_in_flight,
                              [&](std::size_t i) -> std::optional<gateway::Label> {
                                const auto& r = records[i];
                                if (r.method == Method::human) return std::nullopt;
                                try {
                                  return gw.judge(human, item.context + " " + r.continuation).label;
                                } catch (const UnparseableVerdict&) {
                                  return std::nullopt;
                                }
                              });
  for (std::size_t i = 0; i < records.size(); ++i) apply_verdict(records[i], verdicts[i].get());
  return records;
}

std::vector<std::string> judge_inconsistencies(const std::vector<AlternativeRecord>& records) {
  std::string human;
  for (const auto& r : records) {
    if (r.method == Method::human) human = text::to_lower(text::normalize_ws(r.continuation));
  }
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (r.method == Method::human || r.judge_label == gateway::Label::yes) continue;
    if (text::to_lower(text::normalize_ws(r.continuation)) == human) out.push_back(r.candidate_id);
  }
  return out;
}

AlternativeSetSummary summarize(const std::string& item_id, const std::vector<AlternativeRecord>& records) {
  AlternativeSetSummary s;
  s.item_id = item_id;
  for (const auto& r : records) {
    if (r.method == Method::paraphrase) ++s.n_paraphrases;
    if (r.in_goal_directed) ++s.n_goal_directed;
    if (r.in_goal_agnostic) ++s.n_goal_agnostic;
  }
  return s;
}

GoalMatchTable goal_match_proportions(const std::vector<AlternativeRecord>& records) {
  GoalMatchTable t;
  for (auto m : {Method::no_history, Method::prev_utterance, Method::full_history}) {
    GoalMatch g;
    g.method = m;
    for (const auto& r : records) {
      if (r.method != m) continue;
      ++g.n;
      if (r.judge_label == gateway::Label::yes) ++g.n_yes;
    }
    g.proportion = g.n ? static_cast<double>(g.n_yes) / static_cast<double>(g.n) : 0.0;
    t.rows.push_back(g);
  }
  t.increasing_with_history =
      t.rows[0].proportion < t.rows[1].proportion && t.rows[1].proportion < t.rows[2].proportion;
  return t;
}

double lexical_overlap(std::string_view context, std::string_view continuation, OverlapMode mode) {
  auto words = [](std::string_view s) {
    std::vector<std::string> out;
    for (const auto& tok : text::split_ws(s)) {
      if (text::is_punctuation_only(tok)) continue;
      auto core = text::word_core(tok);
      if (!core.empty()) out.push_back(std::move(core));
    }
    return out;
  };
  const auto ctx = words(context);
  const auto cont = words(continuation);
  if (ctx.empty() || cont.empty()) throw InvalidInput("lexical_overlap needs non-empty context and continuation");
  const std::set<std::string> vocab(ctx.begin(), ctx.end());
  if (mode == OverlapMode::tokens) {
    const auto hits = std::count_if(cont.begin(), cont.end(), [&](const std::string& w) { return vocab.count(w); });
    return static_cast<double>(hits) / static_cast<double>(cont.size());
  }
  const std::set<std::string> types(cont.begin(), cont.end());
  std::size_t hits = 0;
  for (const auto& w : types) hits += vocab.count(w);
  return static_cast<double>(hits) / static_cast<double>(types.size());
}

json to_json(const AlternativeRecord& r) {
  return {{"item_id", r.item_id},
          {"candidate_id", r.candidate_id},
          {"continuation", r.continuation},
          {"method", to_string(r.method)},
          {"in_goal_directed", r.in_goal_directed},
          {"in_goal_agnostic", r.in_goal_agnostic},
          {"judge_label", r.judge_label ? json(gateway::to_string(*r.judge_label)) : json()}};
}

AlternativeRecord alternative_from_json(const json& j) {
  AlternativeRecord r;
  try {
    r.item_id = j.at("item_id").get<std::string>();
    r.candidate_id = j.at("candidate_id").get<std::string>();
    r.continuation = j.at("continuation").get<std::string>();
    r.method = method_from_string(j.at("method").get<std::string>());
    r.in_goal_directed = j.at("in_goal_directed").get<bool>();
    r.in_goal_agnostic = j.at("in_goal_agnostic").get<bool>();
    if (j.contains("judge_label") && !j.at("judge_label").is_null()) {
      const auto l = j.at("judge_label").get<std::string>();
      if (l != "yes" && l != "no") throw InvalidInput("bad judge_label '" + l + "'");
      r.judge_label = l == "yes" ? gateway::Label::yes : gateway::Label::no;
    }
  } catch (const json::exception& ex) {
    throw InvalidInput(std::string("bad alternative record: ") + ex.what());
  }
  if (text::trim(r.continuation).empty()) throw InvalidInput("empty continuation in " + r.candidate_id);
  return r;
}

json to_json(const AlternativeSetSummary& s) {
  return {{"item_id", s.item_id},       {"n_paraphrases", s.n_paraphrases}, {"n_goal_directed", s.n_goal_directed},
          {"n_goal_agnostic", s.n_goal_agnostic}, {"dropped", s.dropped}, {"reason", s.reason}};
}

std::string summary_csv(const std::vector<AlternativeSetSummary>& summaries) {
  io::CsvWriter csv({"item_id", "n_paraphrases", "n_goal_directed", "n_goal_agnostic", "dropped", "reason"});
  for (const auto& s : summaries) {
    csv.row({s.item_id, std::to_string(s.n_paraphrases), std::to_string(s.n_goal_directed),
             std::to_string(s.n_goal_agnostic), s.dropped ? "true" : "false", s.reason});
  }
  return csv.str();
}

}  // namespace prodchoice::alternatives
