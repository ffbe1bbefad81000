#include <doctest.h>

#include <cstdlib>

#include "prodchoice/config.hpp"
#include "prodchoice/error.hpp"
#include "prodchoice/io.hpp"
#include "support.hpp"

using namespace prodchoice;
using namespace prodchoice::config;
using nlohmann::json;

namespace {

json minimal() {
  return {{"paths", {{"transcripts", "t.jsonl"}, {"annotations", "a.jsonl"}, {"out_dir", "out"}}},
          {"fixtures", {{"path", "fx.jsonl"}}},
          {"seeds", {{"stratify", 1}, {"paired_diff", 2}}}};
}

struct ScopedEnv {
  std::string name;
  ScopedEnv(std::string n, const std::string& value) : name(std::move(n)) { setenv(name.c_str(), value.c_str(), 1); }
  ~ScopedEnv() { unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("environment interpolation") {
  ScopedEnv v("PRODCHOICE_TEST_VAR", "hello");
  unsetenv("PRODCHOICE_TEST_UNSET");
  const json doc = {{"a", "${PRODCHOICE_TEST_VAR}/x"},
                    {"b", {"${PRODCHOICE_TEST_UNSET:-fallback}", 3}},
                    {"c", {{"d", "plain"}}}};
  const auto out = interpolate_env(doc);
  CHECK(out["a"] == "hello/x");
  CHECK(out["b"][0] == "fallback");
  CHECK(out["b"][1] == 3);
  CHECK(out["c"]["d"] == "plain");
  CHECK_THROWS_AS(interpolate_env(json("${PRODCHOICE_TEST_UNSET}")), ConfigError);
  CHECK_THROWS_AS(interpolate_env(json("${oops")), ConfigError);
}

TEST_CASE("defaults and relative path resolution") {
  const auto c = parse_config(minimal(), "/base/dir");
  CHECK(c.transcripts == "/base/dir/t.jsonl");
  CHECK(c.out_dir == "/base/dir/out");
  CHECK(c.gateway.fixtures_path == "/base/dir/fx.jsonl");
  CHECK(c.gateway.mode == gateway::Mode::replay);
  CHECK(c.n_alternatives == 10);
  CHECK(c.history_token_budget == 1024);
  CHECK(c.stratify_seed == 1);
  CHECK(c.paired_diff_seed == 2);
  CHECK(c.stratification == Stratification::joint);
  CHECK(c.standardization == Standardization::pooled);
  CHECK(c.chance_convention == choice::ChanceConvention::candidates);
  CHECK(c.echo()["seeds"]["stratify"] == 1);
  CHECK(c.echo()["analysis"]["tie_policy"] == "strict");
}

TEST_CASE("invalid documents are config errors") {
  auto doc = minimal();
  doc["bogus"] = 1;
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);

  doc = minimal();
  doc.erase("seeds");
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
  doc = minimal();
  doc["seeds"].erase("paired_diff");
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
  doc = minimal();
  doc["seeds"]["stratify"] = -4;
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);

  const std::vector<std::pair<std::string, json>> bad{
      {"mode", "sometimes"},
      {"analysis", {{"tie_policy", "random"}}},
      {"analysis", {{"standardization", "global"}}},
      {"analysis", {{"stratification", "nested"}}},
      {"analysis", {{"lexical_overlap", "chars"}}},
      {"analysis", {{"chance_convention", "coin"}}},
      {"generation", {{"n", 0}}},
      {"corpus", {{"history_token_budget", 0}}},
      {"scorer", {{"context_window", "big"}}},
  };
  for (const auto& [key, value] : bad) {
    doc = minimal();
    doc[key] = value;
    CAPTURE(key);
    CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
  }
  CHECK_THROWS_AS(parse_config(json::array(), "/"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

  test::TempDir dir;
  io::write_file(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
}

TEST_CASE("environment overrides win over the document") {
  ScopedEnv mode("PRODCHOICE_MODE", "record");
  ScopedEnv fx("PRODCHOICE_FIXTURES", "/tmp/other.jsonl");
  ScopedEnv out("PRODCHOICE_OUT_DIR", "/tmp/out-override");
  ScopedEnv ep("PRODCHOICE_SCORER_ENDPOINT", "http://scorer:1");
  const auto c = parse_config(minimal(), "/base");
  CHECK(c.gateway.mode == gateway::Mode::record);
  CHECK(c.gateway.fixtures_path == "/tmp/other.jsonl");
  CHECK(c.out_dir == "/tmp/out-override");
  CHECK(c.gateway.scorer_endpoint == "http://scorer:1");
  {
    ScopedEnv bad("PRODCHOICE_MODE", "never");
    CHECK_THROWS_AS(parse_config(minimal(), "/base"), ConfigError);
  }
}

TEST_CASE("validation checks inputs and mode requirements") {
  test::TempDir dir;
  io::write_file(dir / "t.jsonl", "");
  io::write_file(dir / "a.jsonl", "");
  auto c = parse_config(minimal(), dir.path());
  CHECK_THROWS_AS(validate(c), ConfigError);  // fixture store missing
  io::write_file(dir / "fx.jsonl", "");
  CHECK_NOTHROW(validate(c));

  c.gateway.mode = gateway::Mode::live;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.gateway.scorer_endpoint = c.gateway.generator_endpoint = "http://localhost:1";
  CHECK_NOTHROW(validate(c));
  c.gateway.mode = gateway::Mode::record;
  c.gateway.fixtures_path.clear();
  CHECK_THROWS_AS(validate(c), ConfigError);

  c = parse_config(minimal(), dir.path());
  c.annotations = dir / "missing.jsonl";
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("the bundled mini config loads") {
  unsetenv("PRODCHOICE_OUT_DIR");
  const auto c = load_config(test::source_dir() / "data/mini/config.json");
  CHECK_NOTHROW(validate(c));
  CHECK(c.n_alternatives == 5);
  CHECK(c.gateway.max_in_flight == 8);
  CHECK(c.out_dir.filename() == "mini");
}
