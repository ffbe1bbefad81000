#include <httplib.h>

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "prodchoice/error.hpp"
#include "prodchoice/gateway.hpp"
#include "testing/synthetic_model.hpp"

using nlohmann::json;
using namespace prodchoice;

// Serves the synthetic model over the HTTP protocol the gateway speaks, so
// record mode can be exercised without a real LM.
int main(int argc, char** argv) {
  CLI::App app{"Synthetic LM server"};
  std::string host = "127.0.0.1";
  int port = 8089;
  std::uint64_t seed = 0;
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  testing::SyntheticModel model(seed);
  httplib::Server server;

  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(handler(json::parse(req.body)).dump(), "application/json");
      } catch (const ContextOverflow&) {
        res.status = 413;
        res.set_content(json{{"error", "context_overflow"}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    };
  };

  server.Post("/score", guarded([&](const json& body) {
    const gateway::ScoreRequest r{body.at("conditioning"), body.at("target"), body.value("model", "")};
    return gateway::to_json(model.score(r, body.value("context_window", std::size_t{1024})));
  }));
  server.Post("/tokenize", guarded([&](const json& body) {
    return json{{"count", model.count_tokens(body.at("text").get<std::string>(), body.value("model", ""))}};
  }));
  server.Post("/chat/completions", guarded([&](const json& body) {
    gateway::GenRequest r;
    r.model_id = body.value("model", "");
    r.temperature = body.value("temperature", 1.0);
    r.n_samples = body.value("n", 1);
    for (const auto& m : body.at("messages")) {
      r.messages.push_back({gateway::role_from_string(m.at("role").get<std::string>()), m.at("content")});
    }
    json choices = json::array();
    int i = 0;
    for (auto& text : model.generate(r)) {
      choices.push_back({{"index", i++}, {"message", {{"role", "assistant"}, {"content", text}}}});
    }
    return json{{"choices", choices}};
  }));

  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return 1;
  }
}
