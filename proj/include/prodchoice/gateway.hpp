#pragma once

#include <chrono>
#include <functional>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prodchoice/concurrency.hpp"

namespace prodchoice::gateway {

using nlohmann::json;

struct Subtoken {
  std::string surface;
  double logprob = 0.0;  // nats, <= 0
};

struct ScoreRequest {
  std::string conditioning;
  std::string target;
  std::string model_id;
};

struct ScoreResponse {
  std::vector<Subtoken> subtokens;
  bool truncated = false;
};

enum class Role { developer, user, assistant };
std::string_view to_string(Role r) noexcept;
Role role_from_string(std::string_view s);

struct Message {
  Role role = Role::user;
  std::string content;
};

struct GenRequest {
  std::vector<Message> messages;
  double temperature = 1.0;
  std::string model_id;
  int n_samples = 1;
  /// Retry ordinal. Part of the fixture key so re-requests replay distinctly;
  /// never sent over the wire.
  int attempt = 0;
};

enum class Label { yes, no };
std::string_view to_string(Label l) noexcept;

struct JudgeVerdict {
  Label label = Label::no;
  std::string raw_response;
};

/// Parses the first word of a judge response, case-insensitively.
JudgeVerdict parse_verdict(std::string_view raw);

/// Transport to a model server. Implementations throw BackendUnavailable for
/// transport failures, ContextOverflow / InvalidRequest for rejected input.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ScoreResponse score(const ScoreRequest& req, std::size_t context_window) = 0;
  virtual std::size_t count_tokens(std::string_view text, const std::string& model_id) = 0;
  virtual std::vector<std::string> generate(const GenRequest& req) = 0;
};

/// Content-addressed store of recorded responses, one JSON object per line:
/// {"key", "capability", "request", "response"}. Reads may run concurrently;
/// writes are serialized. flush() rewrites the file sorted by key.
class FixtureStore {
 public:
  FixtureStore() = default;
  explicit FixtureStore(std::filesystem::path path);

  std::optional<json> find(const std::string& key) const;
  void put(const std::string& key, const std::string& capability, json request, json response);
  void flush() const;
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  struct Entry {
    std::string capability;
    json request;
    json response;
  };
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;
  mutable bool dirty_ = false;
};

enum class Mode { live, record, replay };
std::string_view to_string(Mode m) noexcept;
Mode mode_from_string(std::string_view s);

struct GatewayConfig {
  std::string scorer_endpoint;
  std::string scorer_model_id = "gpt2";
  std::size_t context_window = 1024;
  std::string generator_endpoint;
  std::string generator_model_id = "gpt-4o";
  double temperature = 1.0;
  std::filesystem::path fixtures_path;
  Mode mode = Mode::replay;
  std::size_t max_in_flight = 4;
  int max_transport_retries = 3;
  std::chrono::milliseconds backoff_base{200};
  int max_refusal_retries = 2;
  std::vector<std::string> refusal_patterns = {"i'm sorry", "i am sorry", "i can't", "i cannot"};
  /// Joins history, context and continuation in scoring conditioning strings.
  std::string separator = "\n";
};

/// Canonical cache key: SHA-256 over {capability, model_id, payload}.
std::string request_key(std::string_view capability, std::string_view model_id, const json& payload);

class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<Backend> scorer, std::shared_ptr<Backend> generator,
          std::shared_ptr<FixtureStore> fixtures);
  ~Gateway();

  ScoreResponse score(const ScoreRequest& req);
  std::vector<std::string> generate(const GenRequest& req);
  JudgeVerdict judge(std::string_view sentence_a, std::string_view sentence_b);
  std::size_t count_tokens(std::string_view text);

  std::vector<Outcome<ScoreResponse>> score_batch(const std::vector<ScoreRequest>& reqs);
  std::vector<Outcome<std::vector<std::string>>> generate_batch(const std::vector<GenRequest>& reqs);

  bool is_refusal(std::string_view completion) const;
  const GatewayConfig& config() const noexcept { return config_; }
  void flush() const;

 private:
  json cached(std::string_view capability, const std::string& model_id, const json& payload,
              const std::function<json()>& call);
  json with_transport_retries(const std::function<json()>& call) const;

  GatewayConfig config_;
  std::shared_ptr<Backend> scorer_;
  std::shared_ptr<Backend> generator_;
  std::shared_ptr<FixtureStore> fixtures_;
};

/// HTTP transport. Generation and judging speak the chat-completions JSON
/// protocol; scoring uses POST {base}/score {conditioning, target, model,
/// context_window} -> {tokens: [{text, logprob}], truncated}, and token
/// counting POST {base}/tokenize {text, model} -> {count}.
class HttpBackend final : public Backend {
 public:
  HttpBackend(std::string endpoint, std::string api_key,
              std::chrono::seconds timeout = std::chrono::seconds(120));
  ScoreResponse score(const ScoreRequest& req, std::size_t context_window) override;
  std::size_t count_tokens(std::string_view text, const std::string& model_id) override;
  std::vector<std::string> generate(const GenRequest& req) override;

 private:
  json post(const std::string& path, const json& body) const;
  std::string scheme_host_port_;
  std::string base_path_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

json to_json(const ScoreResponse& r);
ScoreResponse score_response_from_json(const json& j);
json to_json(const GenRequest& r);

/// Builds a gateway from config: HTTP backends for configured endpoints,
/// fixture store at config.fixtures_path. API key from PRODCHOICE_API_KEY.
std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config);

}  // namespace prodchoice::gateway
