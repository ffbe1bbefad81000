#include <httplib.h>
#include <doctest.h>

#include <thread>

#include "prodchoice/error.hpp"
#include "prodchoice/gateway.hpp"
#include "prodchoice/io.hpp"
#include "prodchoice/prompts.hpp"
#include "support.hpp"

using namespace prodchoice;
using namespace prodchoice::gateway;

namespace {

std::vector<std::string> text_words(const std::string& s) {
  // Words with their leading whitespace, so the pieces rebuild the text.
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto start = i;
    while (i < s.size() && s[i] == ' ') ++i;
    while (i < s.size() && s[i] != ' ') ++i;
    out.push_back(s.substr(start, i - start));
  }
  return out;
}

GenRequest completion_request(std::string context = "The cat jumped") {
  GenRequest r;
  r.messages = prompts::completion_messages(prompts::HistoryCondition::no_history, context, "", "A");
  r.n_samples = 1;
  return r;
}

std::shared_ptr<test::ScriptedBackend> echo_backend() {
  auto b = std::make_shared<test::ScriptedBackend>();
  b->on_score = [](const ScoreRequest& r, std::size_t) {
    ScoreResponse res;
    for (const auto& w : text_words(r.target)) res.subtokens.push_back({w, -1.0});
    return res;
  };
  b->on_generate = [](const GenRequest& r) { return std::vector<std::string>(r.n_samples, "The cat jumped over the dog."); };
  return b;
}

}  // namespace

TEST_CASE("live mode echoes backend output and enforces preconditions") {
  auto gw = test::live_gateway(echo_backend());
  const auto out = gw->generate(completion_request());
  CHECK(out == std::vector<std::string>{"The cat jumped over the dog."});
  auto req = completion_request();
  req.n_samples = 3;
  CHECK(gw->generate(req).size() == 3);
  req.n_samples = 0;
  CHECK_THROWS_AS(gw->generate(req), InvalidRequest);
  GenRequest no_dev;
  no_dev.messages = {{Role::user, "hi"}};
  CHECK_THROWS_AS(gw->generate(no_dev), InvalidRequest);
  CHECK_THROWS_AS(gw->score({"ctx", "", ""}), InvalidRequest);
  CHECK_THROWS_AS(gw->score({"ctx", "   ", ""}), InvalidRequest);
  const auto s = gw->score({"", "a", ""});
  REQUIRE(s.subtokens.size() == 1);
  CHECK(s.subtokens[0].surface == "a");
  CHECK(s.subtokens[0].logprob == -1.0);
  CHECK_FALSE(s.truncated);
}

TEST_CASE("record then replay returns identical responses without the backend") {
  test::TempDir dir;
  auto backend = echo_backend();
  GatewayConfig cfg;
  cfg.mode = Mode::record;
  cfg.fixtures_path = dir / "fixtures.jsonl";
  {
    Gateway gw(cfg, backend, backend, std::make_shared<FixtureStore>(cfg.fixtures_path));
    gw.generate(completion_request());
    gw.score({"The cat", " jumped", ""});
    CHECK(gw.count_tokens("a b c") == 5);
    gw.flush();
  }
  const int calls = backend->calls;
  cfg.mode = Mode::replay;
  Gateway replay(cfg, nullptr, nullptr, std::make_shared<FixtureStore>(cfg.fixtures_path));
  CHECK(replay.generate(completion_request()) == std::vector<std::string>{"The cat jumped over the dog."});
  CHECK(replay.score({"The cat", " jumped", ""}).subtokens.size() == 1);
  CHECK(replay.count_tokens("a b c") == 5);
  CHECK(backend->calls == calls);

  try {
    replay.generate(completion_request("A different context"));
    FAIL("expected FixtureMiss");
  } catch (const FixtureMiss& e) {
    const std::string msg = e.what();
    CHECK(msg.find("generate request ") != std::string::npos);
    CHECK(msg.size() > 64);  // carries the request hash
    CHECK(exit_code_for(e.kind()) == 4);
  }
}

TEST_CASE("fixture keys are content addressed") {
  const json a = {{"x", 1}, {"y", 2}};
  const json b = {{"y", 2}, {"x", 1}};
  CHECK(request_key("score", "m", a) == request_key("score", "m", b));
  CHECK(request_key("score", "m", a) != request_key("score", "m2", a));
  CHECK(request_key("score", "m", a) != request_key("judge", "m", a));
  auto r1 = completion_request();
  auto r2 = completion_request();
  r2.attempt = 1;
  CHECK(to_json(r1) != to_json(r2));
}

TEST_CASE("fixture store flush is sorted and reloadable") {
  test::TempDir dir;
  FixtureStore store(dir / "f.jsonl");
  store.put("b", "score", {{"q", 1}}, {{"r", 1}});
  store.put("a", "judge", {{"q", 2}}, {{"r", 2}});
  store.flush();
  FixtureStore back(dir / "f.jsonl");
  CHECK(back.size() == 2);
  CHECK(back.find("a")->at("r") == 2);
  CHECK_FALSE(back.find("c").has_value());
  const auto text = io::read_file(dir / "f.jsonl");
  CHECK(text.find("\"key\":\"a\"") < text.find("\"key\":\"b\""));
}

TEST_CASE("refusals are retried with a new attempt ordinal, then surfaced") {
  auto backend = std::make_shared<test::ScriptedBackend>();
  std::vector<int> attempts;
  std::mutex mu;
  backend->on_generate = [&](const GenRequest& r) {
    std::lock_guard lock(mu);
    attempts.push_back(r.attempt);
    return std::vector<std::string>{r.attempt < 2 ? "I can't do that." : "over the dog."};
  };
  auto gw = test::live_gateway(backend);
  CHECK(gw->generate(completion_request()) == std::vector<std::string>{"over the dog."});
  CHECK(attempts == std::vector<int>{0, 1, 2});

  backend->on_generate = [](const GenRequest&) { return std::vector<std::string>{"I can't do that."}; };
  CHECK_THROWS_AS(gw->generate(completion_request("Something else")), RefusalDetected);
  CHECK(gw->is_refusal("  I'm sorry, but no"));
  CHECK_FALSE(gw->is_refusal("The cat jumped"));
}

TEST_CASE("judge verdict parsing") {
  CHECK(parse_verdict("Yes").label == Label::yes);
  CHECK(parse_verdict("no.").label == Label::no);
  CHECK(parse_verdict("YES, they are").label == Label::yes);
  CHECK_THROWS_AS(parse_verdict("maybe"), UnparseableVerdict);
  CHECK_THROWS_AS(parse_verdict(""), UnparseableVerdict);

  auto backend = std::make_shared<test::ScriptedBackend>();
  backend->on_generate = [](const GenRequest& r) {
    const auto& u = r.messages.back().content;
    return std::vector<std::string>{u.find("a dog") != std::string::npos ? "Yes" : "maybe"};
  };
  auto gw = test::live_gateway(backend);
  CHECK(gw->judge("The cat jumped over the dog.", "The cat jumped over a dog.").label == Label::yes);
  CHECK_THROWS_AS(gw->judge("The cat jumped.", "Something else."), UnparseableVerdict);
  CHECK_THROWS_AS(gw->judge("", "x"), InvalidRequest);
}

TEST_CASE("score responses must rebuild the target and carry valid logprobs") {
  auto backend = std::make_shared<test::ScriptedBackend>();
  backend->on_score = [](const ScoreRequest&, std::size_t) { return ScoreResponse{{{"a", -1.0}, {"x", -1.0}}, false}; };
  auto gw = test::live_gateway(backend);
  CHECK_THROWS_AS(gw->score({"", "a b", ""}), BackendUnavailable);
  CHECK_THROWS_AS(score_response_from_json({{"tokens", {{{"text", "a"}, {"logprob", 0.5}}}}}), BackendUnavailable);
}

TEST_CASE("truncated scoring with a small window") {
  auto backend = std::make_shared<test::ScriptedBackend>();
  backend->on_score = [](const ScoreRequest& r, std::size_t window) {
    const auto cond = text_words(r.conditioning);
    const auto tgt = text_words(r.target);
    if (tgt.size() > window) throw ContextOverflow("target too long");
    ScoreResponse res;
    res.truncated = cond.size() + tgt.size() > window;
    for (const auto& w : tgt) res.subtokens.push_back({w, -0.5});
    return res;
  };
  GatewayConfig cfg;
  cfg.context_window = 8;
  auto gw = test::live_gateway(backend, cfg);
  const auto r = gw->score({"one two three four five six seven", " eight nine", ""});
  CHECK(r.truncated);
  CHECK(r.subtokens.size() == 2);
  CHECK_THROWS_AS(gw->score({"", "1 2 3 4 5 6 7 8 9", ""}), ContextOverflow);
}

TEST_CASE("transport failures are retried, then surfaced") {
  auto backend = std::make_shared<test::ScriptedBackend>();
  std::atomic<int> failures{2};
  backend->on_generate = [&](const GenRequest&) -> std::vector<std::string> {
    if (failures-- > 0) throw BackendUnavailable("flaky");
    return {"fine."};
  };
  GatewayConfig cfg;
  cfg.max_transport_retries = 3;
  auto gw = test::live_gateway(backend, cfg);
  CHECK(gw->generate(completion_request()) == std::vector<std::string>{"fine."});
  failures = 100;
  CHECK_THROWS_AS(gw->generate(completion_request("other")), BackendUnavailable);
}

TEST_CASE("batches keep input order under concurrency") {
  auto backend = std::make_shared<test::ScriptedBackend>();
  backend->on_generate = [](const GenRequest& r) {
    std::this_thread::sleep_for(std::chrono::milliseconds(r.messages.back().content.size() % 5));
    return std::vector<std::string>{r.messages.back().content};
  };
  GatewayConfig cfg;
  cfg.max_in_flight = 4;
  auto gw = test::live_gateway(backend, cfg);
  std::vector<GenRequest> reqs;
  for (int i = 0; i < 20; ++i) reqs.push_back(completion_request("context number " + std::to_string(i)));
  const auto out = gw->generate_batch(reqs);
  REQUIRE(out.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(out[i].get()[0] == reqs[i].messages.back().content);
}

TEST_CASE("http backend speaks the chat and scoring protocols") {
  httplib::Server server;
  json last_chat;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    last_chat = json::parse(req.body);
    json choices = json::array();
    for (int i = 0; i < last_chat.at("n").get<int>(); ++i) {
      choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", "reply " + std::to_string(i)}}}});
    }
    res.set_content(json{{"choices", choices}}.dump(), "application/json");
  });
  server.Post("/v1/score", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    if (body.at("target").get<std::string>().size() > body.at("context_window").get<std::size_t>()) {
      res.status = 413;
      return;
    }
    res.set_content(json{{"tokens", {{{"text", body.at("target")}, {"logprob", -2.0}}}}, {"truncated", false}}.dump(),
                    "application/json");
  });
  server.Post("/v1/tokenize", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"count": 7})", "application/json");
  });
  server.Post(R"(/broken/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackend http("http://127.0.0.1:" + std::to_string(port) + "/v1/", "");
  auto req = completion_request();
  req.n_samples = 2;
  req.model_id = "m";
  CHECK(http.generate(req) == std::vector<std::string>{"reply 0", "reply 1"});
  CHECK(last_chat.at("messages")[0].at("role") == "developer");
  CHECK_FALSE(last_chat.contains("attempt"));
  const auto s = http.score({"ctx", "word", "m"}, 100);
  CHECK(s.subtokens[0].logprob == -2.0);
  CHECK_THROWS_AS(http.score({"ctx", "a long target", "m"}, 4), ContextOverflow);
  CHECK(http.count_tokens("anything", "m") == 7);

  HttpBackend down("http://127.0.0.1:" + std::to_string(port) + "/broken", "", std::chrono::seconds(2));
  CHECK_THROWS_AS(down.generate(req), BackendUnavailable);
  server.stop();
  t.join();
  CHECK_THROWS_AS(HttpBackend("no-scheme", ""), ConfigError);
}
