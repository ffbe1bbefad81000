#include "prodchoice/report.hpp"

#include <map>

#include "prodchoice/error.hpp"
#include "prodchoice/io.hpp"
#include "prodchoice/stats.hpp"

namespace prodchoice::report {

using nlohmann::json;

namespace {

const char* const kCosts[] = {"surprisal", "uid_local", "uid_global", "length"};
const char* const kConditions[] = {"goal_directed", "goal_agnostic"};

std::string display_cost(const std::string& cost) {
  static const std::map<std::string, std::string> names = {
      {"surprisal", "Surprisal"}, {"uid_local", "Local UID"}, {"uid_global", "Global UID"}, {"length", "Length"}};
  const auto it = names.find(cost);
  return it == names.end() ? cost : it->second;
}

std::string display_condition(const std::string& c) {
  return c == "goal_directed" ? "Goal-directed" : "Goal-agnostic";
}

std::string pct(double share) { return io::fmt_real(100.0 * share, 1) + "%"; }

std::string num(const json& v, int precision = 3) {
  return v.is_number() ? io::fmt_real(v.get<double>(), precision) : "n/a";
}

std::string markdown(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  auto line = [](const std::vector<std::string>& cells) {
    std::string s = "|";
    for (const auto& c : cells) s += " " + c + " |";
    return s + "\n";
  };
  std::string out = line(header);
  out += "|";
  for (std::size_t i = 0; i < header.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

const json* find_row(const json& rows, const std::string& cost, const std::string& condition) {
  for (const auto& r : rows) {
    if (r.value("cost", "") == cost && r.value("condition", "") == condition) return &r;
  }
  return nullptr;
}

bool is_error(const json& fit) { return fit.is_object() && fit.contains("error"); }

std::string coefficient_cell(const json& c) {
  if (c.is_null()) return "excluded";
  const double p = c.at("p").is_number() ? c.at("p").get<double>() : 1.0;
  return io::fmt_real(c.at("estimate").get<double>(), 3) + stats::stars(p) + " [" + num(c.at("ci_low")) + ", " +
         num(c.at("ci_high")) + "]";
}

json coefficient(const json& fit, const std::string& name) {
  for (const auto& c : fit.at("coefficients")) {
    if (c.at("name") == name) return c;
  }
  return json();
}

}  // namespace

std::string rank_table_markdown(const json& rank_summary) {
  const auto& rows = rank_summary.at("rows");
  const bool by_candidates = rank_summary.value("chance_convention", "candidates") == "candidates";
  std::vector<std::vector<std::string>> body;
  for (const auto* cost : kCosts) {
    std::vector<std::string> line{display_cost(cost)};
    for (const auto* cond : kConditions) {
      const json* r = find_row(rows, cost, cond);
      if (!r) {
        line.push_back("n/a");
        continue;
      }
      const double mult = (*r).at(by_candidates ? "multiplier_candidates" : "multiplier_alternatives").get<double>();
      line.push_back(pct((*r).at("share").get<double>()) + " (×" + io::fmt_real(mult, 2) + ")");
    }
    body.push_back(line);
  }
  for (const char* key : {"baseline_candidates", "baseline_alternatives"}) {
    std::vector<std::string> line{std::string(key) == "baseline_candidates" ? "Uniform baseline (n_i = candidates)"
                                                                             : "Uniform baseline (n_i = alternatives)"};
    for (const auto* cond : kConditions) {
      // The surprisal sets are the fullest; other measures may drop items.
      const json* r = find_row(rows, "surprisal", cond);
      line.push_back(r ? pct((*r).at(key).get<double>()) : "n/a");
    }
    body.push_back(line);
  }
  std::string out = markdown({"Cost", "Goal-directed", "Goal-agnostic"}, body);
  out += "\nMultipliers use the " + rank_summary.value("chance_convention", std::string("candidates")) +
         " chance convention; ties follow the " + rank_summary.value("tie_policy", std::string("strict")) +
         " policy.\n\nOne-sided Poisson-binomial p-values:\n\n";
  std::vector<std::vector<std::string>> pv;
  for (const auto& r : rows) {
    pv.push_back({display_cost(r.at("cost")), display_condition(r.at("condition")),
                  std::to_string(r.at("n_rank1").get<std::size_t>()) + "/" + std::to_string(r.at("n_sets").get<std::size_t>()),
                  io::fmt_sci(r.at("p_candidates").get<double>()), io::fmt_sci(r.at("p_alternatives").get<double>()),
                  std::to_string(r.at("n_ties").get<std::size_t>())});
  }
  out += markdown({"Cost", "Condition", "Rank 1", "p (candidates)", "p (alternatives)", "Ties"}, pv);
  return out;
}

std::string rank_table_csv(const json& rank_summary) {
  io::CsvWriter csv({"cost", "condition", "n_sets", "n_rank1", "rank1_pct", "baseline_candidates_pct",
                     "multiplier_candidates", "p_candidates", "baseline_alternatives_pct", "multiplier_alternatives",
                     "p_alternatives", "n_ties"});
  for (const auto& r : rank_summary.at("rows")) {
    csv.row({r.at("cost"), r.at("condition"), std::to_string(r.at("n_sets").get<std::size_t>()),
             std::to_string(r.at("n_rank1").get<std::size_t>()), io::fmt_real(100.0 * r.at("share").get<double>(), 2),
             io::fmt_real(100.0 * r.at("baseline_candidates").get<double>(), 2),
             io::fmt_real(r.at("multiplier_candidates").get<double>(), 3), io::fmt_sci(r.at("p_candidates").get<double>()),
             io::fmt_real(100.0 * r.at("baseline_alternatives").get<double>(), 2),
             io::fmt_real(r.at("multiplier_alternatives").get<double>(), 3),
             io::fmt_sci(r.at("p_alternatives").get<double>()), std::to_string(r.at("n_ties").get<std::size_t>())});
  }
  return csv.str();
}

namespace {

std::vector<std::vector<std::string>> condlogit_rows(const json& condlogit) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : condlogit.at("rows")) {
    const auto& fit = r.at("fit");
    std::vector<std::string> line{display_cost(r.at("cost")), display_condition(r.at("condition")),
                                  std::to_string(r.at("n_sets").get<std::size_t>())};
    if (is_error(fit)) {
      line.insert(line.end(), {"error: " + fit.at("error").get<std::string>(), "", "", "", ""});
    } else {
      const auto a = coefficient(fit, "alpha");
      line.insert(line.end(), {num(a.at("estimate")), num(a.at("se")), num(fit.at("per_item_loglik")),
                               num(fit.at("p_rank1")), num(fit.at("p_best_vs_2nd"))});
    }
    body.push_back(line);
  }
  for (const auto* cond : kConditions) {
    const json* r = find_row(condlogit.at("rows"), "surprisal", cond);
    if (!r || !r->contains("uniform")) continue;
    const auto& u = r->at("uniform");
    body.push_back({"Uniform", display_condition(cond), std::to_string(r->at("n_sets").get<std::size_t>()), "0",
                    "", num(u.at("per_item_loglik")), num(u.at("p_rank1")), num(u.at("p_best_vs_2nd"))});
  }
  return body;
}

}  // namespace

std::string condlogit_table_markdown(const json& condlogit) {
  return markdown({"Cost", "Condition", "Sets", "α", "SE", "ℓ", "P(rank=1)", "P(best vs 2nd)"},
                  condlogit_rows(condlogit));
}

std::string condlogit_table_csv(const json& condlogit) {
  io::CsvWriter csv({"cost", "condition", "n_sets", "alpha", "se", "per_item_loglik", "p_rank1", "p_best_vs_2nd"});
  for (const auto& r : condlogit_rows(condlogit)) csv.row(r);
  return csv.str();
}

namespace {

const char* const kPairwiseTerms[] = {"intercept", "delta", "gd", "delta_x_gd"};

}  // namespace

std::string pairwise_table_markdown(const json& pairwise) {
  std::vector<std::vector<std::string>> body;
  for (const auto* cost : kCosts) {
    if (!pairwise.at("fits").contains(cost)) continue;
    const auto& fit = pairwise.at("fits").at(cost);
    std::vector<std::string> line{display_cost(cost)};
    if (is_error(fit)) {
      line.push_back("error: " + fit.at("error").get<std::string>());
      line.resize(8);
    } else {
      for (const auto* term : kPairwiseTerms) line.push_back(coefficient_cell(coefficient(fit, term)));
      line.push_back(coefficient_cell(fit.at("combined")));
      line.push_back(num(fit.at("per_item_loglik")));
      line.push_back(std::to_string(fit.at("n_clusters").get<std::size_t>()));
    }
    body.push_back(line);
  }
  std::string out = markdown({"Cost", "β0 intercept", "β1 Δ", "β2 GD", "β3 Δ×GD", "β1+β3", "ℓ per obs", "Clusters"},
                             body);
  out += "\n95% CIs from CR1 cluster-robust errors (clusters = contexts). * p < .05, ** p < .01, *** p < .001.\n";
  return out;
}

std::string pairwise_table_csv(const json& pairwise) {
  io::CsvWriter csv({"cost", "term", "estimate", "se", "ci_low", "ci_high", "p", "stars"});
  for (const auto* cost : kCosts) {
    if (!pairwise.at("fits").contains(cost)) continue;
    const auto& fit = pairwise.at("fits").at(cost);
    if (is_error(fit)) {
      csv.row({cost, "error", fit.at("error").get<std::string>(), "", "", "", "", ""});
      continue;
    }
    std::vector<json> coefs(fit.at("coefficients").begin(), fit.at("coefficients").end());
    if (!fit.at("combined").is_null()) coefs.push_back(fit.at("combined"));
    for (const auto& c : coefs) {
      const bool tested = c.at("p").is_number();
      const double p = tested ? c.at("p").get<double>() : 1.0;
      csv.row({cost, c.at("name"), num(c.at("estimate"), 6), num(c.at("se"), 6), num(c.at("ci_low"), 6),
               num(c.at("ci_high"), 6), tested ? io::fmt_sci(p) : "n/a", tested ? stats::stars(p) : ""});
    }
  }
  return csv.str();
}

std::string diffs_table_markdown(const json& diffs) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : diffs.at("rows")) {
    body.push_back({display_cost(r.at("cost")), display_condition(r.at("condition")),
                    std::to_string(r.at("n").get<std::size_t>()), num(r.at("mean_diff")), num(r.at("t"), 2),
                    r.at("p").is_number() ? io::fmt_sci(r.at("p").get<double>()) : "n/a"});
  }
  std::string out = markdown({"Cost", "Condition", "n", "Mean diff", "t", "p (one-sided, < 0)"}, body);
  out += "\nOne alternative sampled per context (seed " + std::to_string(diffs.value("seed", 0ULL)) + ").\n";
  return out;
}

std::vector<fs::path> write_report(const fs::path& analysis_dir, const fs::path& out_dir) {
  auto load = [&](const char* name) -> json {
    const auto p = analysis_dir / name;
    if (!fs::exists(p)) return json();
    try {
      return json::parse(io::read_file(p));
    } catch (const json::exception& e) {
      throw InvalidInput(p.string() + ": " + e.what());
    }
  };
  const json rank = load("rank_summary.json");
  const json condlogit = load("condlogit_fit.json");
  const json pairwise = load("pairwise_fit.json");
  const json diffs = load("diffs.json");
  if (rank.is_null() && condlogit.is_null() && pairwise.is_null() && diffs.is_null()) {
    throw MissingInput("no analysis outputs in " + analysis_dir.string());
  }

  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    io::write_file(out_dir / name, content);
    written.push_back(out_dir / name);
  };
  std::string doc = "# Production choice report\n";
  if (!rank.is_null()) {
    const auto md = rank_table_markdown(rank);
    emit("rank1_table.md", md);
    emit("rank1_table.csv", rank_table_csv(rank));
    doc += "\n## Rank-1 outcomes\n\n" + md;
  }
  if (!condlogit.is_null()) {
    const auto md = condlogit_table_markdown(condlogit);
    emit("condlogit_table.md", md);
    emit("condlogit_table.csv", condlogit_table_csv(condlogit));
    doc += "\n## Conditional logit\n\n" + md;
  }
  if (!pairwise.is_null()) {
    const auto md = pairwise_table_markdown(pairwise);
    emit("pairwise_table.md", md);
    emit("pairwise_table.csv", pairwise_table_csv(pairwise));
    doc += "\n## Pairwise logistic regression\n\n" + md;
  }
  if (!diffs.is_null()) {
    const auto md = diffs_table_markdown(diffs);
    emit("diffs_table.md", md);
    doc += "\n## Cost differences\n\n" + md;
  }
  for (const char* plot : {"rank_histogram.csv", "cost_distribution.csv"}) {
    if (fs::exists(analysis_dir / plot)) emit(std::string("plot_") + plot, io::read_file(analysis_dir / plot));
  }
  emit("report.md", doc);
  return written;
}

}  // namespace prodchoice::report
