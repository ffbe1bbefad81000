#include <httplib.h>

#include "prodchoice/error.hpp"
#include "prodchoice/gateway.hpp"

namespace prodchoice::gateway {

namespace {

// "http://host:port/v1" -> ("http://host:port", "/v1")
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint needs a scheme: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string path = endpoint.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {endpoint.substr(0, path_start), path};
}

}  // namespace

HttpBackend::HttpBackend(std::string endpoint, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  std::tie(scheme_host_port_, base_path_) = split_endpoint(endpoint);
}

json HttpBackend::post(const std::string& path, const json& body) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const auto res = client.Post(base_path_ + path, headers, body.dump(), "application/json");
  if (!res) {
    throw BackendUnavailable(scheme_host_port_ + base_path_ + path + ": " + httplib::to_string(res.error()));
  }
  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::parse_error&) {
    if (res->status >= 200 && res->status < 300) throw BackendUnavailable("non-JSON response from " + path);
  }
  if (res->status == 413 || (parsed.is_object() && parsed.value("error", json()).is_string() &&
                             parsed["error"].get<std::string>() == "context_overflow")) {
    throw ContextOverflow("target does not fit the scorer context window");
  }
  if (res->status == 408 || res->status == 429 || res->status >= 500) {
    throw BackendUnavailable(path + " returned HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw InvalidRequest(path + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return parsed;
}

ScoreResponse HttpBackend::score(const ScoreRequest& req, std::size_t context_window) {
  const json body = {{"conditioning", req.conditioning},
                     {"target", req.target},
                     {"model", req.model_id},
                     {"context_window", context_window}};
  return score_response_from_json(post("/score", body));
}

std::size_t HttpBackend::count_tokens(std::string_view text, const std::string& model_id) {
  const json res = post("/tokenize", {{"text", text}, {"model", model_id}});
  try {
    return res.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed tokenize response: ") + e.what());
  }
}

std::vector<std::string> HttpBackend::generate(const GenRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  const json body = {{"model", req.model_id},
                     {"messages", std::move(messages)},
                     {"temperature", req.temperature},
                     {"n", req.n_samples}};
  const json res = post("/chat/completions", body);
  std::vector<std::string> out;
  try {
    for (const auto& choice : res.at("choices")) {
      const auto& content = choice.at("message").at("content");
      out.push_back(content.is_string() ? content.get<std::string>() : std::string());
    }
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed chat completion: ") + e.what());
  }
  return out;
}

}  // namespace prodchoice::gateway
