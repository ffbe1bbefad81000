#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "prodchoice/costs.hpp"
#include "prodchoice/error.hpp"

using namespace prodchoice;
using namespace prodchoice::costs;
using gateway::ScoreResponse;

namespace {

SurprisalProfile profile(std::vector<double> s, ProfileSource src = ProfileSource::continuation) {
  SurprisalProfile p;
  p.source = src;
  for (std::size_t i = 0; i < s.size(); ++i) p.words.push_back({"w" + std::to_string(i), s[i]});
  return p;
}

// Straight transcriptions of the definitions, used as oracles.
double oracle_uid_local(const std::vector<double>& s) {
  long double acc = 0;
  for (std::size_t t = 1; t < s.size(); ++t) acc += (s[t] - s[t - 1]) * (long double)(s[t] - s[t - 1]);
  return static_cast<double>(acc / (s.size() - 1));
}

double oracle_uid_global(const std::vector<double>& s) {
  long double mu = 0;
  for (double v : s) mu += v;
  mu /= s.size();
  long double acc = 0;
  for (double v : s) acc += (v - mu) * (v - mu);
  return static_cast<double>(acc / s.size());
}

}  // namespace

TEST_CASE("subtokens aggregate into word surprisals") {
  ScoreResponse r{{{"ca", -1.0}, {"t", -0.5}}, false};
  const auto p = word_surprisals(r, {"cat"}, ProfileSource::continuation);
  REQUIRE(p.words.size() == 1);
  CHECK(p.words[0].surface == "cat");
  CHECK(p.words[0].surprisal == doctest::Approx(1.5).epsilon(1e-15));

  ScoreResponse one{{{" over", -0.7}, {" the", -0.2}, {" dog", -2.0}}, false};
  const auto q = word_surprisals(one, {"over", "the", "dog"}, ProfileSource::continuation);
  CHECK(q.values() == std::vector<double>{0.7, 0.2, 2.0});
}

TEST_CASE("word alignment rejects inconsistent subtokens") {
  ScoreResponse spanning{{{"a b", -1.0}}, false};
  CHECK_THROWS_AS(word_surprisals(spanning, {"a", "b"}, ProfileSource::continuation), AlignmentError);
  ScoreResponse early{{{"ca", -1.0}, {" t", -1.0}}, false};
  CHECK_THROWS_AS(word_surprisals(early, {"cat"}, ProfileSource::continuation), AlignmentError);
  ScoreResponse short_{{{"ca", -1.0}}, false};
  CHECK_THROWS_AS(word_surprisals(short_, {"cat"}, ProfileSource::continuation), AlignmentError);
  CHECK_THROWS_AS(word_surprisals(short_, {}, ProfileSource::continuation), AlignmentError);
}

TEST_CASE("whitespace subtokens attach to the following word") {
  ScoreResponse r{{{" ", -0.25}, {"a", -1.0}, {" b", -2.0}, {"\n", -0.5}}, false};
  const auto p = word_surprisals(r, {"a", "b"}, ProfileSource::continuation);
  CHECK(p.values()[0] == doctest::Approx(1.25));
  CHECK(p.values()[1] == doctest::Approx(2.5));  // trailing whitespace lands on the last word
}

TEST_CASE("punctuation folding keeps total mass") {
  ScoreResponse r{{{" crazy", -3.0}, {" .", -0.5}}, false};
  const auto kept = word_surprisals(r, {"crazy", "."}, ProfileSource::continuation);
  const auto folded = word_surprisals(r, {"crazy", "."}, ProfileSource::continuation, {true});
  CHECK(kept.words.size() == 2);
  REQUIRE(folded.words.size() == 1);
  CHECK(surprisal_cost(kept) == doctest::Approx(surprisal_cost(folded)));
}

TEST_CASE("surprisal cost sums word surprisals") {
  CHECK(surprisal_cost(profile({1.0, 2.0})) == 3.0);
  CHECK(surprisal_cost(profile({0.0})) == 0.0);
  CHECK(surprisal_cost(profile({0.5, 0.5, 1.5})) == 2.5);
  CHECK_THROWS_AS(surprisal_cost(profile({1.0}, ProfileSource::full)), InvalidInput);
}

TEST_CASE("local UID") {
  CHECK(uid_local_cost(profile({2, 2, 2})) == 0.0);
  CHECK(uid_local_cost(profile({1, 3})) == 4.0);
  CHECK(uid_local_cost(profile({0, 2, 0})) == 4.0);
  CHECK_THROWS_AS(uid_local_cost(profile({1.0})), UndefinedForSingleton);
}

TEST_CASE("global UID") {
  CHECK(uid_global_cost(profile({2, 2, 2}, ProfileSource::full)) == 0.0);
  CHECK(uid_global_cost(profile({1, 3}, ProfileSource::full)) == 1.0);
  CHECK(uid_global_cost(profile({0, 0, 6}, ProfileSource::full)) == 8.0);
}

TEST_CASE("length counts non-punctuation words") {
  CHECK(length_cost("over the dog") == 3);
  CHECK(length_cost("we were absolutely crazy .") == 4);
  CHECK(length_cost("word") == 1);
  CHECK_THROWS_AS(length_cost("-- ..."), InvalidInput);
}

TEST_CASE("cost bundle combines the components") {
  const auto cont = profile({1, 3});
  const auto full = concat_full(profile({1, 1}, ProfileSource::context), cont);
  CHECK(full.source == ProfileSource::full);
  CHECK(full.values() == std::vector<double>{1, 1, 1, 3});
  const auto b = cost_bundle(cont, full, "over there");
  CHECK(b.surprisal == 4.0);
  REQUIRE(b.uid_local);
  CHECK(*b.uid_local == 4.0);
  CHECK(b.uid_global == 0.75);
  CHECK(b.length_words == 2);

  const auto single = cost_bundle(profile({2.0}), concat_full(profile({2, 2}, ProfileSource::context), profile({2.0})),
                                  "yes");
  CHECK_FALSE(single.uid_local.has_value());
  CHECK(single.uid_global == 0.0);
}

TEST_CASE("bundle json round trip preserves undefined local UID") {
  CostBundle b{3.5, std::nullopt, 0.25, 1};
  const auto back = cost_bundle_from_json(to_json(b));
  CHECK(back.surprisal == 3.5);
  CHECK_FALSE(back.uid_local);
  CHECK(back.uid_global == 0.25);
  CHECK(back.length_words == 1);
  const auto p = profile({1.0, 2.5});
  CHECK(profile_from_json(to_json(p)).values() == p.values());
}

TEST_CASE("properties against direct oracles on random profiles") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 12.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(2 + rng() % 20);
    for (auto& v : s) v = u(rng);
    CHECK(uid_local(s) == doctest::Approx(oracle_uid_local(s)).epsilon(1e-12));
    CHECK(uid_global(s) == doctest::Approx(oracle_uid_global(s)).epsilon(1e-12));
    CHECK(uid_local(s) >= 0.0);
    CHECK(uid_global(s) >= 0.0);

    // Global UID ignores order; shifting every value changes neither measure.
    auto shuffled = s;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(uid_global(shuffled) == doctest::Approx(uid_global(s)).epsilon(1e-12));
    auto shifted = s;
    for (auto& v : shifted) v += 3.0;
    CHECK(uid_global(shifted) == doctest::Approx(uid_global(s)).epsilon(1e-9));
    CHECK(uid_local(shifted) == doctest::Approx(uid_local(s)).epsilon(1e-9));
  }
}

TEST_CASE("local UID is order-sensitive where global UID is not") {
  const std::vector<double> a{0, 2, 0}, b{0, 0, 2};
  CHECK(uid_global(a) == uid_global(b));
  CHECK(uid_local(a) == 4.0);
  CHECK(uid_local(b) == 2.0);
}
