#include "prodchoice/config.hpp"

#include <cstdlib>
#include <set>

#include "prodchoice/error.hpp"
#include "prodchoice/io.hpp"

namespace prodchoice::config {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Stratification s) noexcept {
  switch (s) {
    case Stratification::joint: return "joint";
    case Stratification::per_condition: return "per_condition";
    case Stratification::none: return "none";
  }
  return "joint";
}

std::string_view to_string(Standardization s) noexcept {
  return s == Standardization::pooled ? "pooled" : "per_condition";
}

namespace {

std::string interpolate_string(const std::string& s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.compare(i, 2, "${") != 0) {
      out += s[i++];
      continue;
    }
    const auto close = s.find('}', i + 2);
    if (close == std::string::npos) throw ConfigError("unterminated ${ in '" + s + "'");
    std::string expr = s.substr(i + 2, close - i - 2);
    std::optional<std::string> fallback;
    if (const auto d = expr.find(":-"); d != std::string::npos) {
      fallback = expr.substr(d + 2);
      expr = expr.substr(0, d);
    }
    const char* v = std::getenv(expr.c_str());
    if (v && *v) {
      out += v;
    } else if (fallback) {
      out += *fallback;
    } else {
      throw ConfigError("environment variable " + expr + " is not set");
    }
    i = close + 1;
  }
  return out;
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::uint64_t require_seed(const json& seeds, const char* name) {
  if (!seeds.contains(name)) throw ConfigError(std::string("seeds.") + name + " is required");
  const auto& v = seeds.at(name);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(std::string("seeds.") + name + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

}  // namespace

json interpolate_env(const json& value) {
  if (value.is_string()) return interpolate_string(value.get<std::string>());
  if (value.is_object()) {
    json out = json::object();
    for (auto it = value.begin(); it != value.end(); ++it) out[it.key()] = interpolate_env(it.value());
    return out;
  }
  if (value.is_array()) {
    json out = json::array();
    for (const auto& v : value) out.push_back(interpolate_env(v));
    return out;
  }
  return value;
}

PipelineConfig parse_config(const json& raw, const fs::path& base_dir) {
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kKnown = {"paths",  "scorer", "generator", "fixtures", "mode",    "concurrency",
                                               "retries", "corpus", "generation", "seeds",   "analysis", "report"};
  for (auto it = raw.begin(); it != raw.end(); ++it) {
    if (!kKnown.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  const json doc = interpolate_env(raw);
  PipelineConfig c;
  try {
    const json paths = doc.value("paths", json::object());
    c.transcripts = resolve(base_dir, paths.value("transcripts", ""));
    c.annotations = resolve(base_dir, paths.value("annotations", ""));
    c.out_dir = resolve(base_dir, paths.value("out_dir", "out"));

    auto& g = c.gateway;
    const json scorer = doc.value("scorer", json::object());
    g.scorer_endpoint = scorer.value("endpoint", "");
    g.scorer_model_id = scorer.value("model_id", g.scorer_model_id);
    g.context_window = scorer.value("context_window", g.context_window);
    const json gen = doc.value("generator", json::object());
    g.generator_endpoint = gen.value("endpoint", "");
    g.generator_model_id = gen.value("model_id", g.generator_model_id);
    g.temperature = gen.value("temperature", g.temperature);
    g.fixtures_path = resolve(base_dir, doc.value("fixtures", json::object()).value("path", ""));
    g.mode = gateway::mode_from_string(doc.value("mode", "replay"));
    g.max_in_flight = doc.value("concurrency", json::object()).value("max_in_flight", g.max_in_flight);
    const json retries = doc.value("retries", json::object());
    g.max_transport_retries = retries.value("transport", g.max_transport_retries);
    g.backoff_base = std::chrono::milliseconds(retries.value("backoff_ms", g.backoff_base.count()));
    g.max_refusal_retries = retries.value("refusal", g.max_refusal_retries);
    if (gen.contains("refusal_patterns")) g.refusal_patterns = gen.at("refusal_patterns").get<std::vector<std::string>>();
    g.separator = scorer.value("separator", g.separator);

    const json corpus = doc.value("corpus", json::object());
    c.history_token_budget = corpus.value("history_token_budget", c.history_token_budget);
    c.fold_punctuation = corpus.value("fold_punctuation", c.fold_punctuation);
    c.n_alternatives = doc.value("generation", json::object()).value("n", c.n_alternatives);

    if (!doc.contains("seeds")) throw ConfigError("seeds section is required");
    c.stratify_seed = require_seed(doc.at("seeds"), "stratify");
    c.paired_diff_seed = require_seed(doc.at("seeds"), "paired_diff");

    const json analysis = doc.value("analysis", json::object());
    c.tie_policy = analysis.value("tie_policy", c.tie_policy);
    c.chance_convention = choice::chance_convention_from_string(analysis.value("chance_convention", "candidates"));
    const auto std_pop = analysis.value("standardization", "pooled");
    if (std_pop == "pooled") {
      c.standardization = Standardization::pooled;
    } else if (std_pop == "per_condition") {
      c.standardization = Standardization::per_condition;
    } else {
      throw ConfigError("analysis.standardization must be pooled or per_condition");
    }
    const auto strat = analysis.value("stratification", "joint");
    if (strat == "joint") {
      c.stratification = Stratification::joint;
    } else if (strat == "per_condition") {
      c.stratification = Stratification::per_condition;
    } else if (strat == "none") {
      c.stratification = Stratification::none;
    } else {
      throw ConfigError("analysis.stratification must be joint, per_condition or none");
    }
    const auto overlap = analysis.value("lexical_overlap", "types");
    if (overlap != "types" && overlap != "tokens") throw ConfigError("analysis.lexical_overlap must be types or tokens");
    c.overlap_mode = overlap == "types" ? alternatives::OverlapMode::types : alternatives::OverlapMode::tokens;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }

  if (auto v = env("PRODCHOICE_MODE")) {
    try {
      c.gateway.mode = gateway::mode_from_string(*v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (auto v = env("PRODCHOICE_FIXTURES")) c.gateway.fixtures_path = *v;
  if (auto v = env("PRODCHOICE_SCORER_ENDPOINT")) c.gateway.scorer_endpoint = *v;
  if (auto v = env("PRODCHOICE_GENERATOR_ENDPOINT")) c.gateway.generator_endpoint = *v;
  if (auto v = env("PRODCHOICE_OUT_DIR")) c.out_dir = *v;

  if (c.tie_policy != "strict") throw ConfigError("analysis.tie_policy: only 'strict' is supported");
  if (c.n_alternatives < 1) throw ConfigError("generation.n must be positive");
  if (c.history_token_budget == 0) throw ConfigError("corpus.history_token_budget must be positive");
  if (c.gateway.context_window == 0) throw ConfigError("scorer.context_window must be positive");
  if (c.gateway.max_in_flight == 0) throw ConfigError("concurrency.max_in_flight must be positive");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  } catch (const MissingInput& e) {
    throw ConfigError(e.what());
  }
  return parse_config(doc, fs::absolute(path).parent_path());
}

void validate(const PipelineConfig& c) {
  if (c.transcripts.empty()) throw ConfigError("paths.transcripts is required");
  if (!fs::exists(c.transcripts)) throw ConfigError("transcripts not found: " + c.transcripts.string());
  if (c.annotations.empty()) throw ConfigError("paths.annotations is required");
  if (!fs::exists(c.annotations)) throw ConfigError("annotations not found: " + c.annotations.string());
  const auto& g = c.gateway;
  if (g.mode == gateway::Mode::replay) {
    if (g.fixtures_path.empty()) throw ConfigError("replay mode requires fixtures.path");
    if (!fs::exists(g.fixtures_path)) throw ConfigError("fixture store not found: " + g.fixtures_path.string());
  } else {
    if (g.scorer_endpoint.empty()) throw ConfigError(std::string(to_string(g.mode)) + " mode requires scorer.endpoint");
    if (g.generator_endpoint.empty()) {
      throw ConfigError(std::string(to_string(g.mode)) + " mode requires generator.endpoint");
    }
    if (g.mode == gateway::Mode::record && g.fixtures_path.empty()) {
      throw ConfigError("record mode requires fixtures.path");
    }
  }
}

json PipelineConfig::echo() const {
  return {{"scorer", {{"model_id", gateway.scorer_model_id}, {"context_window", gateway.context_window}}},
          {"generator", {{"model_id", gateway.generator_model_id}, {"temperature", gateway.temperature}}},
          {"corpus", {{"history_token_budget", history_token_budget}, {"fold_punctuation", fold_punctuation}}},
          {"generation", {{"n", n_alternatives}}},
          {"seeds", {{"stratify", stratify_seed}, {"paired_diff", paired_diff_seed}}},
          {"analysis",
           {{"tie_policy", tie_policy},
            {"chance_convention", choice::to_string(chance_convention)},
            {"standardization", to_string(standardization)},
            {"stratification", to_string(stratification)},
            {"lexical_overlap", overlap_mode == alternatives::OverlapMode::types ? "types" : "tokens"}}}};
}

}  // namespace prodchoice::config
