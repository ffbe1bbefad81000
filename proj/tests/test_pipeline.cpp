#include <doctest.h>

#include <cstdlib>
#include <map>

#include "prodchoice/config.hpp"
#include "prodchoice/error.hpp"
#include "prodchoice/io.hpp"
#include "prodchoice/pipeline.hpp"
#include "support.hpp"

using namespace prodchoice;
using namespace prodchoice::pipeline;
namespace fs = std::filesystem;

namespace {

config::PipelineConfig mini_config(const fs::path& out) {
  unsetenv("PRODCHOICE_OUT_DIR");
  unsetenv("PRODCHOICE_MODE");
  auto c = config::load_config(test::source_dir() / "data/mini/config.json");
  c.out_dir = out;
  return c;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return out;
}

CostRow row(std::string item, std::string cand, alternatives::Method m, bool gd, bool ga, double s,
            std::optional<double> local = 1.0) {
  CostRow r;
  r.item_id = std::move(item);
  r.candidate_id = std::move(cand);
  r.method = m;
  r.in_goal_directed = gd;
  r.in_goal_agnostic = ga;
  r.bundle = {s, local, 0.5, 3};
  return r;
}

}  // namespace

TEST_CASE("choice sets hold the human plus the condition's alternatives") {
  using alternatives::Method;
  const std::vector<CostRow> rows{
      row("i1", "i1/h", Method::human, false, false, 5.0),
      row("i1", "i1/p0", Method::paraphrase, true, false, 4.0),
      row("i1", "i1/n0", Method::no_history, false, true, 6.0, std::nullopt),
      row("i1", "i1/f0", Method::full_history, true, true, 7.0),
      row("i2", "i2/h", Method::human, false, false, 1.0),
      row("i2", "i2/n0", Method::no_history, false, true, 2.0),
      row("i3", "i3/p0", Method::paraphrase, true, false, 2.0),
  };
  const auto gd = build_choice_sets(rows, "surprisal", choice::Condition::goal_directed, nullptr);
  REQUIRE(gd.size() == 1);
  CHECK(gd[0].item_id == "i1");
  REQUIRE(gd[0].candidates.size() == 3);
  CHECK(gd[0].candidates[0].is_human);
  CHECK(gd[0].human_index() == 0);
  CHECK(gd[0].costs() == std::vector<double>{5.0, 4.0, 7.0});

  const auto ga = build_choice_sets(rows, "surprisal", choice::Condition::goal_agnostic, nullptr);
  REQUIRE(ga.size() == 2);
  CHECK(ga[0].candidates.size() == 3);
  CHECK(ga[1].item_id == "i2");

  const auto local = build_choice_sets(rows, "uid_local", choice::Condition::goal_agnostic, nullptr);
  CHECK(local[0].candidates.size() == 2);  // undefined local UID is left out

  const std::set<std::string> selected{"i1/f0"};
  const auto strat = build_choice_sets(rows, "length", choice::Condition::goal_agnostic, &selected);
  REQUIRE(strat.size() == 1);
  CHECK(strat[0].costs() == std::vector<double>{3.0, 3.0});
  CHECK_THROWS_AS(build_choice_sets(rows, "vibes", choice::Condition::goal_agnostic, nullptr), InvalidInput);

  const auto back = cost_row_from_json(to_json(rows[2]));
  CHECK(back.candidate_id == "i1/n0");
  CHECK_FALSE(back.bundle.uid_local.has_value());
  CHECK(back.in_goal_agnostic);
}

TEST_CASE("mini corpus replay is reproducible and cached") {
  test::TempDir dir;
  const auto cfg = mini_config(dir / "run1");
  const auto first = run_pipeline(cfg);
  CHECK(first.executed.size() == 8);
  CHECK(first.skipped.empty());
  CHECK(fs::exists(dir / "run1/report/rank1_table.md"));
  CHECK(first.manifest["mode"] == "replay");
  CHECK(first.manifest["stages"].size() == 8);

  const auto again = run_pipeline(cfg);
  CHECK(again.executed.empty());
  CHECK(again.skipped.size() == 8);

  const auto other = run_pipeline(mini_config(dir / "run2"));
  CHECK(other.executed.size() == 8);
  CHECK(tree(dir / "run1") == tree(dir / "run2"));

  SUBCASE("a regenerated output that hashes the same leaves downstream stages cached") {
    fs::remove(dir / "run1/costs.jsonl");
    const auto s = run_pipeline(cfg);
    CHECK(s.executed == std::vector<std::string>{"cost"});
  }
  SUBCASE("a new stratification seed reruns stratify and everything after it") {
    auto c = cfg;
    c.stratify_seed += 1;
    const auto s = run_pipeline(c);
    CHECK(s.executed == std::vector<std::string>{"stratify", "analyze", "report"});
  }
}

TEST_CASE("replay against an empty fixture store fails with the request hash") {
  test::TempDir dir;
  auto cfg = mini_config(dir / "out");
  cfg.gateway.fixtures_path = dir / "empty.jsonl";
  io::write_file(cfg.gateway.fixtures_path, "");
  try {
    run_pipeline(cfg);
    FAIL("expected FixtureMiss");
  } catch (const FixtureMiss& e) {
    CHECK(std::string(e.what()).find(" request ") != std::string::npos);
  }
}

TEST_CASE("analysis stages write their outputs from a cost table") {
  test::TempDir dir;
  const auto cfg = mini_config(dir / "out");
  run_pipeline(cfg);
  const Layout L{dir / "out"};
  const auto rows = read_cost_rows(L.costs());
  CHECK_FALSE(rows.empty());
  const auto w = run_analyze(cfg, Analysis::rank, L.costs(), {}, dir / "unstratified");
  CHECK_FALSE(w.empty());
  const auto rank = nlohmann::json::parse(io::read_file(dir / "unstratified/rank_summary.json"));
  CHECK(rank.is_object());
  for (auto a : kAllAnalyses) CHECK_FALSE(to_string(a).empty());
}
