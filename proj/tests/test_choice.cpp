#include <doctest.h>

#include <cmath>
#include <random>

#include "prodchoice/choice.hpp"
#include "prodchoice/error.hpp"

using namespace prodchoice;
using namespace prodchoice::choice;

namespace {

ChoiceSet make_set(std::string id, double human, std::vector<double> alts,
                   Condition cond = Condition::goal_directed) {
  ChoiceSet s{std::move(id), {{"h", human, true}}, cond};
  for (std::size_t i = 0; i < alts.size(); ++i) s.candidates.push_back({"a" + std::to_string(i), alts[i], false});
  return s;
}

std::vector<ChoiceSet> simulate_condlogit(double alpha, int n_sets, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ChoiceSet> sets;
  for (int i = 0; i < n_sets; ++i) {
    std::vector<double> c(k);
    for (auto& v : c) v = nd(rng);
    const auto p = softmax_choice(c, alpha);
    double r = u(rng), acc = 0.0;
    std::size_t chosen = k - 1;
    for (int j = 0; j < k; ++j) {
      acc += p[j];
      if (r < acc) {
        chosen = j;
        break;
      }
    }
    ChoiceSet s{"s" + std::to_string(i), {}, Condition::goal_directed};
    for (int j = 0; j < k; ++j) s.candidates.push_back({"c" + std::to_string(j), c[j], j == static_cast<int>(chosen)});
    sets.push_back(std::move(s));
  }
  return sets;
}

}  // namespace

TEST_CASE("softmax production rule") {
  const std::vector<double> equal{2.0, 2.0, 2.0, 2.0};
  for (double p : softmax_choice(equal, 3.7)) CHECK(p == doctest::Approx(0.25));
  const std::vector<double> c{0.0, 5.0};
  CHECK(softmax_choice(c, 0.0) == std::vector<double>{0.5, 0.5});
  const std::vector<double> d{0.0, std::log(2.0)};
  const auto p = softmax_choice(d, 1.0);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Large alpha does not overflow.
  const auto q = softmax_choice(d, 1e6);
  CHECK(q[0] == 1.0);
  CHECK(std::isfinite(q[1]));
}

TEST_CASE("argmin keeps ties") {
  const std::vector<double> a{3, 1, 2}, b{1, 1, 2};
  CHECK(argmin_choice(a) == std::vector<std::size_t>{1});
  CHECK(argmin_choice(b) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("strict rank of the human") {
  CHECK(rank_of_human(make_set("x", 1.0, {2, 3})) == 1);
  CHECK(rank_of_human(make_set("x", 2.5, {1, 2, 3})) == 3);
  const auto tied = make_set("x", 1.0, {1.0, 4.0});
  CHECK(rank_of_human(tied) == 1);
  CHECK(human_tied(tied));
  CHECK_FALSE(human_tied(make_set("x", 1.0, {2.0})));
}

TEST_CASE("choice set validation") {
  CHECK_THROWS_AS(make_set("x", 1.0, {}).validate(), InvalidInput);
  auto two_humans = make_set("x", 1.0, {2.0});
  two_humans.candidates[1].is_human = true;
  CHECK_THROWS_AS(two_humans.validate(), InvalidInput);
  CHECK_THROWS_AS(make_set("x", 1.0, {NAN}).validate(), InvalidInput);
}

TEST_CASE("pairwise rows come in both orientations") {
  const auto rows = build_pairwise({make_set("ctx", 1.0, {3.0, 2.0})}, false);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].y == 1);
  CHECK(rows[0].delta_cost == -2.0);
  CHECK(rows[1].y == 0);
  CHECK(rows[1].delta_cost == 2.0);
  CHECK(rows[0].cluster_id == "ctx");
  CHECK(rows[0].gd == 1);
  const auto std_rows = build_pairwise({make_set("a", 1.0, {3.0}), make_set("b", 0.0, {1.0}, Condition::goal_agnostic)});
  double mean = 0.0, ss = 0.0;
  for (const auto& r : std_rows) mean += r.delta_cost;
  mean /= std_rows.size();
  for (const auto& r : std_rows) ss += (r.delta_cost - mean) * (r.delta_cost - mean);
  CHECK(mean == doctest::Approx(0.0));
  CHECK(ss / std_rows.size() == doctest::Approx(1.0));
  CHECK_THROWS_AS(build_pairwise({make_set("a", 1.0, {1.0})}), DegenerateVariance);
}

TEST_CASE("pairwise fit with no signal") {
  std::vector<PairwiseRow> rows;
  for (int c = 0; c < 4; ++c) {
    rows.push_back({1, 0.0, 0, "c" + std::to_string(c)});
    rows.push_back({0, 0.0, 0, "c" + std::to_string(c)});
  }
  const auto fit = fit_pairwise_logit(rows);
  CHECK(fit.excluded == std::vector<std::string>{"delta", "gd", "delta_x_gd"});
  REQUIRE(fit.coefficients.size() == 1);
  CHECK(fit.coefficients[0].estimate == doctest::Approx(0.0));
  CHECK_FALSE(fit.combined.has_value());
  CHECK(fit.per_item_loglik == doctest::Approx(std::log(0.5)));
}

TEST_CASE("pairwise fit matches an independent two-parameter Newton solve") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PairwiseRow> rows;
  for (int i = 0; i < 400; ++i) {
    const double x = nd(rng);
    const int y = u(rng) < 1.0 / (1.0 + std::exp(-(0.4 - 0.8 * x))) ? 1 : 0;
    rows.push_back({y, x, 0, "g" + std::to_string(i % 40)});
  }
  // Oracle: Newton on (b0, b1) with an explicit 2x2 inverse, then the CR1 sandwich.
  double b0 = 0, b1 = 0;
  double h00 = 0, h01 = 0, h11 = 0;
  for (int it = 0; it < 50; ++it) {
    double g0 = 0, g1 = 0;
    h00 = h01 = h11 = 0;
    for (const auto& r : rows) {
      const double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * r.delta_cost)));
      g0 += r.y - p;
      g1 += (r.y - p) * r.delta_cost;
      const double w = p * (1 - p);
      h00 += w;
      h01 += w * r.delta_cost;
      h11 += w * r.delta_cost * r.delta_cost;
    }
    const double det = h00 * h11 - h01 * h01;
    b0 += (h11 * g0 - h01 * g1) / det;
    b1 += (-h01 * g0 + h00 * g1) / det;
  }
  const double det = h00 * h11 - h01 * h01;
  const double i00 = h11 / det, i01 = -h01 / det, i11 = h00 / det;
  std::map<std::string, std::pair<double, double>> score;
  for (const auto& r : rows) {
    const double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * r.delta_cost)));
    score[r.cluster_id].first += r.y - p;
    score[r.cluster_id].second += (r.y - p) * r.delta_cost;
  }
  double m00 = 0, m01 = 0, m11 = 0;
  for (const auto& [id, s] : score) {
    m00 += s.first * s.first;
    m01 += s.first * s.second;
    m11 += s.second * s.second;
  }
  const double G = static_cast<double>(score.size());
  const double adj = G / (G - 1);
  // (I M I)_11 for the slope.
  const double a0 = i01 * m00 + i11 * m01, a1 = i01 * m01 + i11 * m11;
  const double var_b1 = adj * (a0 * i01 + a1 * i11);
  const double c0 = i00 * m00 + i01 * m01, c1 = i00 * m01 + i01 * m11;
  const double var_b0 = adj * (c0 * i00 + c1 * i01);

  const auto fit = fit_pairwise_logit(rows);
  CHECK(fit.diagnostics.converged);
  CHECK(fit.excluded == std::vector<std::string>{"gd", "delta_x_gd"});
  REQUIRE(fit.find("intercept"));
  REQUIRE(fit.find("delta"));
  CHECK(fit.find("intercept")->estimate == doctest::Approx(b0).epsilon(1e-9));
  CHECK(fit.find("delta")->estimate == doctest::Approx(b1).epsilon(1e-9));
  CHECK(fit.find("intercept")->se == doctest::Approx(std::sqrt(var_b0)).epsilon(1e-8));
  CHECK(fit.find("delta")->se == doctest::Approx(std::sqrt(var_b1)).epsilon(1e-8));
  CHECK(fit.classical_covariance[1][1] == doctest::Approx(i11).epsilon(1e-8));
  const auto* d = fit.find("delta");
  CHECK(d->ci_low == doctest::Approx(d->estimate - kZ975 * d->se));
  CHECK(fit.n_clusters == 40);
}

TEST_CASE("pairwise fit error contracts") {
  CHECK_THROWS_AS(fit_pairwise_logit({}), InsufficientData);
  std::vector<PairwiseRow> one_cluster{{1, 1.0, 0, "a"}, {0, -1.0, 0, "a"}, {1, -0.5, 0, "a"}, {0, 0.7, 0, "a"}};
  CHECK_THROWS_AS(fit_pairwise_logit(one_cluster), InsufficientData);
  // Human always cheaper: delta perfectly predicts y.
  std::vector<PairwiseRow> separated;
  for (int c = 0; c < 6; ++c) {
    separated.push_back({1, -1.0 - c, c % 2, "c" + std::to_string(c)});
    separated.push_back({0, 1.0 + c, c % 2, "c" + std::to_string(c)});
  }
  CHECK_THROWS_AS(fit_pairwise_logit(separated), PerfectSeparation);
  // GD constant at 1 duplicates the intercept column.
  for (auto& r : separated) r.gd = 1;
  CHECK_THROWS_AS(fit_pairwise_logit(separated), NonIdentifiable);
}

TEST_CASE("mirrored design pins the intercept and GD terms") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::vector<ChoiceSet> sets;
  for (int i = 0; i < 60; ++i) {
    sets.push_back(make_set("c" + std::to_string(i), nd(rng), {nd(rng), nd(rng)},
                            i % 2 ? Condition::goal_directed : Condition::goal_agnostic));
  }
  const auto fit = fit_pairwise_logit(build_pairwise(sets));
  CHECK(std::fabs(fit.find("intercept")->estimate) < 1e-10);
  CHECK(std::fabs(fit.find("gd")->estimate) < 1e-10);
  CHECK(std::isnan(fit.find("gd")->p));
  REQUIRE(fit.combined);
  CHECK(fit.combined->name == "delta_plus_delta_x_gd");
  CHECK(fit.combined->estimate ==
        doctest::Approx(fit.find("delta")->estimate + fit.find("delta_x_gd")->estimate));
}

TEST_CASE("conditional logit metrics on a hand example") {
  const std::vector<ChoiceSet> sets{make_set("a", 0.0, {1.0}), make_set("b", 1.0, {0.0})};
  const auto fit = condlogit_at(sets, std::log(2.0), "fixed");
  CHECK(fit.loglik == doctest::Approx(std::log(2.0 / 3.0) + std::log(1.0 / 3.0)));
  CHECK(fit.per_item_loglik == doctest::Approx(std::log(2.0 / 9.0) / 2.0));
  CHECK(*fit.p_rank1 == doctest::Approx(2.0 / 3.0));
  CHECK(*fit.p_best_vs_2nd == doctest::Approx(2.0 / 3.0));
  const auto uniform = condlogit_at(sets, 0.0, "uniform");
  CHECK(uniform.per_item_loglik == doctest::Approx(std::log(0.5)));
  CHECK(*uniform.p_best_vs_2nd == 0.5);
}

TEST_CASE("conditional logit recovers alpha") {
  const auto sets = simulate_condlogit(1.5, 1000, 5, 17);
  const auto fit = fit_conditional_logit(sets);
  CHECK(fit.diagnostics.converged);
  CHECK(std::fabs(fit.coefficients[0].estimate - 1.5) <= 0.15);
  CHECK(fit.coefficients[0].se > 0.0);

  const auto null_sets = simulate_condlogit(0.0, 1000, 5, 18);
  const auto null_fit = fit_conditional_logit(null_sets);
  CHECK(std::fabs(null_fit.coefficients[0].estimate) <= 0.1);
  CHECK(null_fit.per_item_loglik == doctest::Approx(-std::log(5.0)).epsilon(0.02));
}

TEST_CASE("conditional logit gradient matches finite differences") {
  const auto sets = simulate_condlogit(0.8, 200, 4, 3);
  for (double a : {-1.0, 0.0, 0.7, 2.5}) {
    const double h = 1e-5;
    const double fd = (condlogit_loglik(sets, a + h) - condlogit_loglik(sets, a - h)) / (2 * h);
    const double g = condlogit_gradient(sets, a);
    CHECK(std::fabs(fd - g) <= 1e-6 * std::max(1.0, std::fabs(g)));
  }
}

TEST_CASE("conditional logit error contracts") {
  CHECK_THROWS_AS(fit_conditional_logit({}), InsufficientData);
  CHECK_THROWS_AS(fit_conditional_logit({make_set("a", 1.0, {1.0}), make_set("b", 2.0, {2.0})}), NonIdentifiable);
  CHECK_THROWS_AS(fit_conditional_logit({make_set("a", 0.0, {1.0}), make_set("b", 0.5, {2.0})}), PerfectSeparation);
  CHECK_THROWS_AS(fit_conditional_logit({make_set("a", 3.0, {1.0}), make_set("b", 5.0, {2.0})}), PerfectSeparation);
}

TEST_CASE("rank-1 summary and baselines") {
  std::vector<ChoiceSet> sets{make_set("a", 0.0, {1.0}), make_set("b", 0.0, {1.0, 2.0, 3.0}),
                              make_set("c", 5.0, {1.0, 2.0})};
  const auto row = rank1_summary("surprisal", Condition::goal_directed, sets);
  CHECK(row.n_sets == 3);
  CHECK(row.n_rank1 == 2);
  CHECK(row.share == doctest::Approx(2.0 / 3.0));
  CHECK(row.baseline_candidates == doctest::Approx((0.5 + 0.25 + 1.0 / 3.0) / 3.0));
  CHECK(row.baseline_alternatives == doctest::Approx((1.0 + 1.0 / 3.0 + 0.5) / 3.0));
  CHECK(row.multiplier_candidates == doctest::Approx(row.share / row.baseline_candidates));
  // P(K >= 2) for Bernoulli(1/2, 1/4, 1/3): enumerate the qualifying outcomes.
  const double p = 0.5 * 0.25 * (2.0 / 3.0) + 0.5 * 0.75 * (1.0 / 3.0) + 0.5 * 0.25 * (1.0 / 3.0) +
                   0.5 * 0.25 * (1.0 / 3.0);
  CHECK(row.p_candidates == doctest::Approx(p).epsilon(1e-12));

  std::vector<ChoiceSet> best(5, make_set("x", 0.0, {1.0, 2.0}));
  const auto all = rank1_summary("length", Condition::goal_agnostic, best);
  CHECK(all.share == 1.0);
  CHECK(all.p_candidates == doctest::Approx(std::pow(1.0 / 3.0, 5)));

  CHECK(rank_histogram(sets) == std::vector<std::size_t>{2, 0, 1});
  CHECK_THROWS_AS(chance_convention_from_string("nope"), ConfigError);
}

TEST_CASE("fit and choice set json round trip") {
  const auto sets = simulate_condlogit(1.0, 100, 3, 4);
  const auto fit = fit_conditional_logit(sets);
  const auto back = fit_from_json(to_json(fit));
  CHECK(back.coefficients[0].estimate == fit.coefficients[0].estimate);
  CHECK(back.coefficients[0].se == fit.coefficients[0].se);
  CHECK(*back.p_rank1 == *fit.p_rank1);
  const auto s = choice_set_from_json(to_json(sets[0]));
  CHECK(s.costs() == sets[0].costs());
  CHECK(s.human_index() == sets[0].human_index());
}

TEST_CASE("newton iterations converge when the log-likelihood change is below rounding") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  std::vector<ChoiceSet> sets;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> c(5);
    for (auto& v : c) v = nd(rng);
    const auto p = softmax_choice(c, 3.0);
    std::discrete_distribution<int> pick(p.begin(), p.end());
    const int chosen = pick(rng);
    ChoiceSet s;
    s.item_id = std::to_string(i);
    for (int j = 0; j < 5; ++j) s.candidates.push_back({std::to_string(j), c[j], j == chosen});
    sets.push_back(std::move(s));
  }
  const auto fit = fit_conditional_logit(sets);
  CHECK(fit.diagnostics.converged);
  CHECK(fit.diagnostics.gradient_norm <= kGradientTolerance);
  CHECK(std::fabs(condlogit_gradient(sets, fit.find("alpha")->estimate)) / 1000.0 <= kGradientTolerance);
}
