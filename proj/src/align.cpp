#include "prodchoice/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "prodchoice/error.hpp"
#include "prodchoice/stats.hpp"

namespace prodchoice::align {

using nlohmann::json;

namespace {

double midpoint_quantile(const std::vector<double>& sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return 0.5 * (sorted[lo] + sorted[hi]);
}

}  // namespace

TertileEdges tertile_edges(std::span<const double> values) {
  if (values.empty()) throw InsufficientData("tertile edges need at least one value");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return {midpoint_quantile(v, 1.0 / 3.0), midpoint_quantile(v, 2.0 / 3.0)};
}

int bin_of(double value, const TertileEdges& edges) {
  if (value <= edges.lower) return 0;
  if (value <= edges.upper) return 1;
  return 2;
}

Stratum stratum_of(const costs::CostBundle& b, const TertileEdges& length_edges,
                   const TertileEdges& uid_global_edges) {
  return {bin_of(static_cast<double>(b.length_words), length_edges), bin_of(b.uid_global, uid_global_edges)};
}

Allocation allocate(std::span<const std::size_t> human_counts, std::span<const std::size_t> available) {
  if (human_counts.size() != available.size()) throw InvalidInput("stratum count mismatch");
  const std::size_t k = human_counts.size();
  Allocation out;
  out.counts.assign(k, 0);

  std::vector<bool> active(k, false);
  std::size_t human_total = 0;
  for (std::size_t s = 0; s < k; ++s) {
    if (human_counts[s] == 0) continue;
    if (available[s] == 0) {
      out.empty_strata.push_back(s);
      continue;
    }
    active[s] = true;
    human_total += human_counts[s];
  }
  if (human_total == 0) return out;

  // T * h_s / H <= a_s  <=>  T <= floor(a_s * H / h_s), in exact integers.
  std::size_t total = std::numeric_limits<std::size_t>::max();
  for (std::size_t s = 0; s < k; ++s) {
    if (active[s]) total = std::min(total, available[s] * human_total / human_counts[s]);
  }
  out.total = total;

  std::size_t assigned = 0;
  std::vector<std::size_t> remainder(k, 0);
  for (std::size_t s = 0; s < k; ++s) {
    if (!active[s]) continue;
    out.counts[s] = total * human_counts[s] / human_total;
    remainder[s] = total * human_counts[s] % human_total;
    assigned += out.counts[s];
  }
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < k; ++s) {
    if (active[s]) order.push_back(s);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return human_counts[a] > human_counts[b];
  });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out.counts[order[i % order.size()]];
  return out;
}

StratificationResult stratified_sample(const std::vector<costs::CostBundle>& human,
                                       const std::vector<Candidate>& generated, std::uint64_t seed) {
  if (human.empty()) throw InsufficientData("stratification needs human bundles");
  StratificationResult result;
  result.seed = seed;

  std::vector<double> lengths;
  std::vector<double> globals;
  for (const auto& b : human) {
    lengths.push_back(static_cast<double>(b.length_words));
    globals.push_back(b.uid_global);
  }
  result.length_edges = tertile_edges(lengths);
  result.uid_global_edges = tertile_edges(globals);

  std::vector<std::size_t> human_counts(kStrataCount, 0);
  for (const auto& b : human) ++human_counts[stratum_of(b, result.length_edges, result.uid_global_edges).index()];

  std::vector<std::vector<std::size_t>> pools(kStrataCount);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (!seen.insert(generated[i].candidate_id).second) {
      throw InvalidInput("duplicate candidate_id " + generated[i].candidate_id);
    }
    pools[stratum_of(generated[i].bundle, result.length_edges, result.uid_global_edges).index()].push_back(i);
  }
  std::vector<std::size_t> available(kStrataCount);
  for (int s = 0; s < kStrataCount; ++s) available[s] = pools[s].size();

  const auto alloc = allocate(human_counts, available);
  for (auto s : alloc.empty_strata) {
    result.warnings.push_back("EmptyStratum: stratum " + std::to_string(s) +
                              " has human utterances but no generated candidates; total rescaled");
  }

  std::mt19937_64 rng(seed);
  for (int s = 0; s < kStrataCount; ++s) {
    auto& pool = pools[s];
    const std::size_t want = alloc.counts[s];
    // Partial Fisher-Yates: the first `want` slots become the sample.
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + stats::uniform_below(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
      result.selected_candidate_ids.push_back(generated[pool[i]].candidate_id);
    }
    StratumReport rep;
    rep.stratum = {s / 3, s % 3};
    rep.human_count = human_counts[s];
    rep.human_proportion = static_cast<double>(human_counts[s]) / static_cast<double>(human.size());
    rep.available = available[s];
    rep.target = want;
    rep.achieved = want;
    result.strata.push_back(rep);
  }
  std::sort(result.selected_candidate_ids.begin(), result.selected_candidate_ids.end());
  return result;
}

std::vector<DistributionTest> distribution_tests(const std::vector<costs::CostBundle>& human,
                                                 const std::vector<costs::CostBundle>& generated,
                                                 double alpha) {
  struct Measure {
    const char* name;
    std::optional<double> (*get)(const costs::CostBundle&);
  };
  static constexpr Measure kMeasures[] = {
      {"surprisal", [](const costs::CostBundle& b) -> std::optional<double> { return b.surprisal; }},
      {"uid_local", [](const costs::CostBundle& b) { return b.uid_local; }},
      {"uid_global", [](const costs::CostBundle& b) -> std::optional<double> { return b.uid_global; }},
      {"length", [](const costs::CostBundle& b) -> std::optional<double> { return b.length_words; }},
  };
  std::vector<DistributionTest> out;
  for (const auto& m : kMeasures) {
    std::vector<double> a;
    std::vector<double> g;
    for (const auto& b : human) {
      if (auto v = m.get(b)) a.push_back(*v);
    }
    for (const auto& b : generated) {
      if (auto v = m.get(b)) g.push_back(*v);
    }
    if (a.size() < 2 || g.size() < 2) {
      throw InsufficientData(std::string(m.name) + ": need at least two observations per group");
    }
    DistributionTest row;
    row.cost = m.name;
    row.n_human = a.size();
    row.n_generated = g.size();
    row.mean_human = stats::mean(a);
    row.mean_generated = stats::mean(g);
    try {
      const auto t = stats::t_test(a, g, stats::Sided::two);
      row.t = t.t;
      row.p = t.p;
    } catch (const ZeroVariance&) {
      // Both groups constant: equal means are indistinguishable, unequal
      // means are perfectly separated.
      row.t = row.mean_human == row.mean_generated ? 0.0 : std::copysign(INFINITY, row.mean_human - row.mean_generated);
      row.p = row.mean_human == row.mean_generated ? 1.0 : 0.0;
    }
    row.flagged = row.p < alpha;
    out.push_back(row);
  }
  return out;
}

std::vector<DistributionTest> verify_alignment(const StratificationResult& result,
                                               const std::vector<costs::CostBundle>& human,
                                               const std::vector<Candidate>& generated, double alpha) {
  const std::set<std::string> chosen(result.selected_candidate_ids.begin(), result.selected_candidate_ids.end());
  std::vector<costs::CostBundle> subset;
  for (const auto& c : generated) {
    if (chosen.count(c.candidate_id)) subset.push_back(c.bundle);
  }
  return distribution_tests(human, subset, alpha);
}

json to_json(const StratificationResult& r) {
  json strata = json::array();
  for (const auto& s : r.strata) {
    strata.push_back({{"length_bin", s.stratum.length_bin},
                      {"uid_global_bin", s.stratum.uid_global_bin},
                      {"human_count", s.human_count},
                      {"human_proportion", s.human_proportion},
                      {"available", s.available},
                      {"target", s.target},
                      {"achieved", s.achieved}});
  }
  return {{"edges",
           {{"length", {r.length_edges.lower, r.length_edges.upper}},
            {"uid_global", {r.uid_global_edges.lower, r.uid_global_edges.upper}}}},
          {"strata", std::move(strata)},
          {"selected_candidate_ids", r.selected_candidate_ids},
          {"total", r.selected_candidate_ids.size()},
          {"seed", r.seed},
          {"warnings", r.warnings}};
}

StratificationResult stratification_from_json(const json& j) {
  StratificationResult r;
  try {
    const auto& e = j.at("edges");
    r.length_edges = {e.at("length").at(0).get<double>(), e.at("length").at(1).get<double>()};
    r.uid_global_edges = {e.at("uid_global").at(0).get<double>(), e.at("uid_global").at(1).get<double>()};
    for (const auto& s : j.at("strata")) {
      StratumReport rep;
      rep.stratum = {s.at("length_bin").get<int>(), s.at("uid_global_bin").get<int>()};
      rep.human_count = s.at("human_count").get<std::size_t>();
      rep.human_proportion = s.at("human_proportion").get<double>();
      rep.available = s.at("available").get<std::size_t>();
      rep.target = s.at("target").get<std::size_t>();
      rep.achieved = s.at("achieved").get<std::size_t>();
      r.strata.push_back(rep);
    }
    r.selected_candidate_ids = j.at("selected_candidate_ids").get<std::vector<std::string>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& ex) {
    throw InvalidInput(std::string("bad stratification file: ") + ex.what());
  }
  return r;
}

json to_json(const std::vector<DistributionTest>& tests) {
  json out = json::array();
  for (const auto& t : tests) {
    out.push_back({{"cost", t.cost},
                   {"n_human", t.n_human},
                   {"n_generated", t.n_generated},
                   {"mean_human", t.mean_human},
                   {"mean_generated", t.mean_generated},
                   {"t", t.t},
                   {"p", t.p},
                   {"flagged", t.flagged}});
  }
  return out;
}

}  // namespace prodchoice::align
