#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include "prodchoice/gateway.hpp"

namespace prodchoice::test {

namespace fs = std::filesystem;

inline fs::path source_dir() { return PRODCHOICE_SOURCE_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("prodchoice_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Backend whose behaviour is supplied per test.
struct ScriptedBackend : gateway::Backend {
  std::function<gateway::ScoreResponse(const gateway::ScoreRequest&, std::size_t)> on_score;
  std::function<std::vector<std::string>(const gateway::GenRequest&)> on_generate;
  std::function<std::size_t(std::string_view)> on_count;
  std::atomic<int> calls{0};

  gateway::ScoreResponse score(const gateway::ScoreRequest& req, std::size_t window) override {
    ++calls;
    return on_score(req, window);
  }
  std::size_t count_tokens(std::string_view text, const std::string&) override {
    ++calls;
    return on_count ? on_count(text) : text.size();
  }
  std::vector<std::string> generate(const gateway::GenRequest& req) override {
    ++calls;
    return on_generate(req);
  }
};

/// Live gateway over `backend` with an in-memory fixture store.
inline std::unique_ptr<gateway::Gateway> live_gateway(std::shared_ptr<gateway::Backend> backend,
                                                      gateway::GatewayConfig cfg = {}) {
  cfg.mode = gateway::Mode::live;
  cfg.fixtures_path.clear();
  cfg.backoff_base = std::chrono::milliseconds(0);
  return std::make_unique<gateway::Gateway>(cfg, backend, backend, std::make_shared<gateway::FixtureStore>());
}

}  // namespace prodchoice::test
