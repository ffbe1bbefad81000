#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prodchoice/gateway.hpp"

namespace prodchoice::costs {

enum class ProfileSource { context, continuation, full };
std::string_view to_string(ProfileSource s) noexcept;
ProfileSource profile_source_from_string(std::string_view s);

struct WordSurprisal {
  std::string surface;
  double surprisal = 0.0;  // nats
};

/// Word-level surprisal sequence s = (s_1, ..., s_n).
struct SurprisalProfile {
  std::vector<WordSurprisal> words;
  ProfileSource source = ProfileSource::continuation;

  std::vector<double> values() const;
};

struct CostBundle {
  double surprisal = 0.0;
  std::optional<double> uid_local;  // undefined for single-word continuations
  double uid_global = 0.0;
  int length_words = 0;
};

struct AlignOptions {
  /// Fold punctuation-only words into the preceding word instead of keeping
  /// them as their own profile entries. Scoring mass is kept either way.
  bool fold_punctuation = false;
};

/// Aggregates subtoken logprobs into word surprisals. A subtoken's leading
/// whitespace marks the start of a new word; whitespace-only subtokens attach
/// to the following word.
SurprisalProfile word_surprisals(const gateway::ScoreResponse& score,
                                 const std::vector<std::string>& word_boundaries,
                                 ProfileSource source, const AlignOptions& options = {});

double surprisal_cost(const SurprisalProfile& continuation);
double uid_local_cost(const SurprisalProfile& continuation);
double uid_global_cost(const SurprisalProfile& full);
int length_cost(std::string_view continuation_text);

// Span kernels shared with the profile overloads.
double uid_local(std::span<const double> s);
double uid_global(std::span<const double> s);

/// Context profile followed by continuation profile, tagged `full`.
SurprisalProfile concat_full(const SurprisalProfile& context, const SurprisalProfile& continuation);

CostBundle cost_bundle(const SurprisalProfile& continuation, const SurprisalProfile& full,
                       std::string_view continuation_text);

/// Unit recorded in output metadata.
inline constexpr std::string_view kSurprisalUnit = "nats";

nlohmann::json to_json(const SurprisalProfile& p);
SurprisalProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CostBundle& b);
CostBundle cost_bundle_from_json(const nlohmann::json& j);

}  // namespace prodchoice::costs
