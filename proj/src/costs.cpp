#include "prodchoice/costs.hpp"

#include <cctype>
#include <cmath>
#include <numeric>

#include "prodchoice/error.hpp"
#include "prodchoice/text.hpp"

namespace prodchoice::costs {

using nlohmann::json;

std::string_view to_string(ProfileSource s) noexcept {
  switch (s) {
    case ProfileSource::context: return "context";
    case ProfileSource::continuation: return "continuation";
    case ProfileSource::full: return "full";
  }
  return "continuation";
}

ProfileSource profile_source_from_string(std::string_view s) {
  if (s == "context") return ProfileSource::context;
  if (s == "continuation") return ProfileSource::continuation;
  if (s == "full") return ProfileSource::full;
  throw InvalidInput("unknown profile source '" + std::string(s) + "'");
}

std::vector<double> SurprisalProfile::values() const {
  std::vector<double> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(w.surprisal);
  return out;
}

SurprisalProfile word_surprisals(const gateway::ScoreResponse& score,
                                 const std::vector<std::string>& words, ProfileSource source,
                                 const AlignOptions& options) {
  if (words.empty()) throw AlignmentError("no words to align");
  std::vector<double> logprob(words.size(), 0.0);
  std::size_t wi = 0;
  std::size_t pos = 0;
  double pending = 0.0;  // whitespace-only subtokens waiting for a word

  for (const auto& tok : score.subtokens) {
    const std::string core = text::trim(tok.surface);
    if (core.empty()) {
      pending += tok.logprob;
      continue;
    }
    if (core.find_first_of(" \t\n\r") != std::string::npos) {
      throw AlignmentError("subtoken '" + tok.surface + "' spans a word boundary");
    }
    if (wi >= words.size()) throw AlignmentError("subtoken '" + tok.surface + "' past the last word");
    const bool leading_space = !tok.surface.empty() && std::isspace(static_cast<unsigned char>(tok.surface[0]));
    if (leading_space && pos != 0) {
      throw AlignmentError("word '" + words[wi] + "' ends early at subtoken '" + tok.surface + "'");
    }
    if (words[wi].compare(pos, core.size(), core) != 0) {
      throw AlignmentError("subtoken '" + tok.surface + "' does not match word sequence");
    }
    logprob[wi] += tok.logprob + pending;
    pending = 0.0;
    pos += core.size();
    if (pos == words[wi].size()) {
      ++wi;
      pos = 0;
    }
  }
  if (wi != words.size() || pos != 0) throw AlignmentError("subtokens do not cover all words");
  logprob.back() += pending;

  SurprisalProfile out;
  out.source = source;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const double s = logprob[i] == 0.0 ? 0.0 : -logprob[i];
    if (options.fold_punctuation && !out.words.empty() && text::is_punctuation_only(words[i])) {
      out.words.back().surface += " " + words[i];
      out.words.back().surprisal += s;
      continue;
    }
    out.words.push_back({words[i], s});
  }
  return out;
}

double surprisal_cost(const SurprisalProfile& continuation) {
  if (continuation.source != ProfileSource::continuation) {
    throw InvalidInput("surprisal_cost expects a continuation profile");
  }
  double total = 0.0;
  for (const auto& w : continuation.words) total += w.surprisal;
  return total;
}

double uid_local(std::span<const double> s) {
  if (s.size() < 2) throw UndefinedForSingleton("local UID needs at least two words");
  double acc = 0.0;
  for (std::size_t t = 1; t < s.size(); ++t) {
    const double d = s[t] - s[t - 1];
    acc += d * d;
  }
  return acc / static_cast<double>(s.size() - 1);
}

double uid_global(std::span<const double> s) {
  if (s.empty()) throw InvalidInput("global UID needs at least one word");
  const double n = static_cast<double>(s.size());
  const double mu = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double acc = 0.0;
  for (double v : s) acc += (v - mu) * (v - mu);
  return acc / n;
}

double uid_local_cost(const SurprisalProfile& continuation) {
  const auto v = continuation.values();
  return uid_local(v);
}

double uid_global_cost(const SurprisalProfile& full) {
  if (full.source != ProfileSource::full) throw InvalidInput("uid_global_cost expects a full profile");
  const auto v = full.values();
  return uid_global(v);
}

int length_cost(std::string_view continuation_text) {
  int n = 0;
  for (const auto& tok : text::split_ws(continuation_text)) {
    if (!text::is_punctuation_only(tok)) ++n;
  }
  if (n == 0) throw InvalidInput("continuation has no words: '" + std::string(continuation_text) + "'");
  return n;
}

SurprisalProfile concat_full(const SurprisalProfile& context, const SurprisalProfile& continuation) {
  SurprisalProfile out;
  out.source = ProfileSource::full;
  out.words = context.words;
  out.words.insert(out.words.end(), continuation.words.begin(), continuation.words.end());
  return out;
}

CostBundle cost_bundle(const SurprisalProfile& continuation, const SurprisalProfile& full,
                       std::string_view continuation_text) {
  CostBundle b;
  b.surprisal = surprisal_cost(continuation);
  if (continuation.words.size() >= 2) b.uid_local = uid_local_cost(continuation);
  b.uid_global = uid_global_cost(full);
  b.length_words = length_cost(continuation_text);
  return b;
}

json to_json(const SurprisalProfile& p) {
  json words = json::array();
  for (const auto& w : p.words) words.push_back({{"w", w.surface}, {"s", w.surprisal}});
  return {{"source", to_string(p.source)}, {"words", std::move(words)}};
}

SurprisalProfile profile_from_json(const json& j) {
  SurprisalProfile p;
  p.source = profile_source_from_string(j.at("source").get<std::string>());
  for (const auto& w : j.at("words")) p.words.push_back({w.at("w").get<std::string>(), w.at("s").get<double>()});
  return p;
}

json to_json(const CostBundle& b) {
  return {{"surprisal", b.surprisal},
          {"uid_local", b.uid_local ? json(*b.uid_local) : json()},
          {"uid_local_defined", b.uid_local.has_value()},
          {"uid_global", b.uid_global},
          {"length", b.length_words}};
}

CostBundle cost_bundle_from_json(const json& j) {
  CostBundle b;
  b.surprisal = j.at("surprisal").get<double>();
  if (j.contains("uid_local") && !j.at("uid_local").is_null()) b.uid_local = j.at("uid_local").get<double>();
  b.uid_global = j.at("uid_global").get<double>();
  b.length_words = j.at("length").get<int>();
  return b;
}

}  // namespace prodchoice::costs
