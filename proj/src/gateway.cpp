#include "prodchoice/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "prodchoice/error.hpp"
#include "prodchoice/hashing.hpp"
#include "prodchoice/io.hpp"
#include "prodchoice/prompts.hpp"
#include "prodchoice/text.hpp"

namespace prodchoice::gateway {

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::developer: return "developer";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "developer" || s == "system") return Role::developer;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw InvalidRequest("unknown role '" + std::string(s) + "'");
}

std::string_view to_string(Label l) noexcept { return l == Label::yes ? "yes" : "no"; }

std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::live: return "live";
    case Mode::record: return "record";
    case Mode::replay: return "replay";
  }
  return "replay";
}

Mode mode_from_string(std::string_view s) {
  if (s == "live") return Mode::live;
  if (s == "record") return Mode::record;
  if (s == "replay") return Mode::replay;
  throw ConfigError("mode must be one of live|record|replay, got '" + std::string(s) + "'");
}

JudgeVerdict parse_verdict(std::string_view raw) {
  const auto words = text::split_ws(raw);
  const auto first = words.empty() ? std::string() : text::word_core(words.front());
  if (first == "yes") return {Label::yes, std::string(raw)};
  if (first == "no") return {Label::no, std::string(raw)};
  throw UnparseableVerdict("judge replied '" + std::string(raw) + "'");
}

json to_json(const ScoreResponse& r) {
  json tokens = json::array();
  for (const auto& t : r.subtokens) tokens.push_back({{"text", t.surface}, {"logprob", t.logprob}});
  return {{"tokens", std::move(tokens)}, {"truncated", r.truncated}};
}

ScoreResponse score_response_from_json(const json& j) {
  ScoreResponse r;
  try {
    for (const auto& t : j.at("tokens")) {
      r.subtokens.push_back({t.at("text").get<std::string>(), t.at("logprob").get<double>()});
    }
    r.truncated = j.value("truncated", false);
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed score response: ") + e.what());
  }
  for (const auto& t : r.subtokens) {
    if (!std::isfinite(t.logprob) || t.logprob > 0.0) {
      throw BackendUnavailable("score response has invalid logprob for '" + t.surface + "'");
    }
  }
  return r;
}

json to_json(const GenRequest& r) {
  json messages = json::array();
  for (const auto& m : r.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"messages", std::move(messages)},
          {"temperature", r.temperature},
          {"n", r.n_samples},
          {"attempt", r.attempt}};
}

// --- fixture store ----------------------------------------------------------

FixtureStore::FixtureStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  for (auto& row : io::read_jsonl(path_)) {
    try {
      entries_[row.at("key").get<std::string>()] =
          Entry{row.at("capability").get<std::string>(), row.at("request"), row.at("response")};
    } catch (const json::exception& e) {
      throw ConfigError("bad fixture row in " + path_.string() + ": " + e.what());
    }
  }
}

std::optional<json> FixtureStore::find(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return std::optional<json>(std::in_place, it->second.response);
}

void FixtureStore::put(const std::string& key, const std::string& capability, json request,
                       json response) {
  std::unique_lock lock(mutex_);
  entries_[key] = Entry{capability, std::move(request), std::move(response)};
  dirty_ = true;
}

void FixtureStore::flush() const {
  std::unique_lock lock(mutex_);
  if (!dirty_ || path_.empty()) return;
  std::vector<json> rows;
  rows.reserve(entries_.size());
  for (const auto& [key, e] : entries_) {
    rows.push_back({{"key", key}, {"capability", e.capability}, {"request", e.request}, {"response", e.response}});
  }
  io::write_jsonl(path_, rows);
  dirty_ = false;
}

std::size_t FixtureStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// --- gateway ----------------------------------------------------------------

std::string request_key(std::string_view capability, std::string_view model_id, const json& payload) {
  // nlohmann::json objects serialize with sorted keys, so dump() is canonical.
  const json canon = {{"capability", capability}, {"model_id", model_id}, {"payload", payload}};
  return sha256_hex(canon.dump());
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Backend> scorer,
                 std::shared_ptr<Backend> generator, std::shared_ptr<FixtureStore> fixtures)
    : config_(std::move(config)),
      scorer_(std::move(scorer)),
      generator_(std::move(generator)),
      fixtures_(fixtures ? std::move(fixtures) : std::make_shared<FixtureStore>()) {}

Gateway::~Gateway() {
  try {
    flush();
  } catch (...) {
  }
}

void Gateway::flush() const { fixtures_->flush(); }

json Gateway::with_transport_retries(const std::function<json()>& call) const {
  for (int attempt = 0;; ++attempt) {
    try {
      return call();
    } catch (const BackendUnavailable&) {
      if (attempt >= config_.max_transport_retries) throw;
      std::this_thread::sleep_for(config_.backoff_base * (1LL << attempt));
    }
  }
}

json Gateway::cached(std::string_view capability, const std::string& model_id, const json& payload,
                     const std::function<json()>& call) {
  const auto key = request_key(capability, model_id, payload);
  if (config_.mode != Mode::live) {
    if (auto hit = fixtures_->find(key)) return *hit;
    if (config_.mode == Mode::replay) {
      throw FixtureMiss(std::string(capability) + " request " + key);
    }
  }
  json response = with_transport_retries(call);
  if (config_.mode == Mode::record || !fixtures_->path().empty()) {
    fixtures_->put(key, std::string(capability), {{"model_id", model_id}, {"payload", payload}}, response);
  }
  return response;
}

ScoreResponse Gateway::score(const ScoreRequest& req) {
  if (req.target.empty() || text::trim(req.target).empty()) {
    throw InvalidRequest("score target must be non-empty");
  }
  ScoreRequest r = req;
  if (r.model_id.empty()) r.model_id = config_.scorer_model_id;
  const json payload = {{"conditioning", r.conditioning},
                        {"target", r.target},
                        {"context_window", config_.context_window}};
  const json response = cached("score", r.model_id, payload, [&] {
    if (!scorer_) throw BackendUnavailable("no scorer backend configured");
    return to_json(scorer_->score(r, config_.context_window));
  });
  auto out = score_response_from_json(response);
  if (text::normalize_ws([&] {
        std::string s;
        for (const auto& t : out.subtokens) s += t.surface;
        return s;
      }()) != text::normalize_ws(r.target)) {
    throw BackendUnavailable("score response does not reconstruct the target text");
  }
  return out;
}

std::size_t Gateway::count_tokens(std::string_view text) {
  const json payload = {{"text", text}};
  const json response = cached("tokenize", config_.scorer_model_id, payload, [&] {
    if (!scorer_) throw BackendUnavailable("no scorer backend configured");
    return json{{"count", scorer_->count_tokens(text, config_.scorer_model_id)}};
  });
  return response.at("count").get<std::size_t>();
}

bool Gateway::is_refusal(std::string_view completion) const {
  const auto lowered = text::to_lower(text::trim(completion));
  for (const auto& pattern : config_.refusal_patterns) {
    if (lowered.rfind(text::to_lower(pattern), 0) == 0) return true;
  }
  return false;
}

std::vector<std::string> Gateway::generate(const GenRequest& req) {
  if (req.messages.empty() || req.messages.front().role != Role::developer) {
    throw InvalidRequest("first message must have role developer");
  }
  if (req.n_samples < 1) throw InvalidRequest("n_samples must be >= 1");
  GenRequest r = req;
  if (r.model_id.empty()) r.model_id = config_.generator_model_id;

  for (int refusals = 0;; ++refusals) {
    const json response = cached("generate", r.model_id, to_json(r), [&] {
      if (!generator_) throw BackendUnavailable("no generator backend configured");
      return json{{"completions", generator_->generate(r)}};
    });
    auto completions = response.at("completions").get<std::vector<std::string>>();
    if (completions.size() != static_cast<std::size_t>(r.n_samples)) {
      throw BackendUnavailable("expected " + std::to_string(r.n_samples) + " completions, got " +
                               std::to_string(completions.size()));
    }
    bool refused = false;
    for (const auto& c : completions) refused = refused || is_refusal(c);
    if (!refused) return completions;
    if (refusals >= config_.max_refusal_retries) {
      throw RefusalDetected("model refused after " + std::to_string(refusals + 1) + " attempts");
    }
    ++r.attempt;
  }
}

JudgeVerdict Gateway::judge(std::string_view sentence_a, std::string_view sentence_b) {
  if (text::trim(sentence_a).empty() || text::trim(sentence_b).empty()) {
    throw InvalidRequest("judge sentences must be non-empty");
  }
  GenRequest r;
  r.messages = prompts::judge_messages(sentence_a, sentence_b);
  r.temperature = config_.temperature;
  r.model_id = config_.generator_model_id;
  const json response = cached("judge", r.model_id, to_json(r), [&] {
    if (!generator_) throw BackendUnavailable("no generator backend configured");
    return json{{"completions", generator_->generate(r)}};
  });
  const auto completions = response.at("completions").get<std::vector<std::string>>();
  if (completions.empty()) throw UnparseableVerdict("empty judge response");
  return parse_verdict(completions.front());
}

std::vector<Outcome<ScoreResponse>> Gateway::score_batch(const std::vector<ScoreRequest>& reqs) {
  return bounded_map(reqs.size(), config_.max_in_flight, [&](std::size_t i) { return score(reqs[i]); });
}

std::vector<Outcome<std::vector<std::string>>> Gateway::generate_batch(
    const std::vector<GenRequest>& reqs) {
  return bounded_map(reqs.size(), config_.max_in_flight,
                     [&](std::size_t i) { return generate(reqs[i]); });
}

std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config) {
  std::string api_key;
  if (const char* k = std::getenv("PRODCHOICE_API_KEY")) api_key = k;
  std::shared_ptr<Backend> scorer;
  std::shared_ptr<Backend> generator;
  if (config.mode != Mode::replay) {
    if (!config.scorer_endpoint.empty()) scorer = std::make_shared<HttpBackend>(config.scorer_endpoint, api_key);
    if (!config.generator_endpoint.empty()) {
      generator = std::make_shared<HttpBackend>(config.generator_endpoint, api_key);
    }
  }
  auto fixtures = std::make_shared<FixtureStore>(config.fixtures_path);
  if (config.mode == Mode::replay && config.fixtures_path.empty()) {
    throw ConfigError("replay mode requires fixtures.path");
  }
  return std::make_unique<Gateway>(config, scorer, generator, fixtures);
}

}  // namespace prodchoice::gateway
