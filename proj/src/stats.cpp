#include "prodchoice/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "prodchoice/error.hpp"

namespace prodchoice::stats {

PoissonBinomial poisson_binomial_pmf(std::span<const double> probs) {
  PoissonBinomial out;
  out.probabilities.assign(probs.begin(), probs.end());
  out.pmf.assign(probs.size() + 1, 0.0);
  out.pmf[0] = 1.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidProbability("p[" + std::to_string(i) + "] = " + std::to_string(p));
    }
    // new[k] = old[k](1-p) + old[k-1]p, updated in place from the top.
    for (std::size_t k = i + 1; k > 0; --k) {
      out.pmf[k] = out.pmf[k] * (1.0 - p) + out.pmf[k - 1] * p;
    }
    out.pmf[0] *= (1.0 - p);
  }
  return out;
}

double upper_tail(const PoissonBinomial& dist, std::size_t k_obs) {
  const std::size_t n = dist.pmf.size() - 1;
  if (k_obs > n) {
    throw InvalidObservation("k_obs " + std::to_string(k_obs) + " exceeds N = " + std::to_string(n));
  }
  if (k_obs == 0) return 1.0;
  // Sum the tail from its far end so small terms are not swamped.
  double tail = 0.0;
  for (std::size_t k = n + 1; k-- > k_obs;) tail += dist.pmf[k];
  return std::min(1.0, tail);
}

double poisson_binomial_pvalue(std::span<const double> probs, std::size_t k_obs) {
  return upper_tail(poisson_binomial_pmf(probs), k_obs);
}

std::string_view to_string(Sided s) noexcept {
  switch (s) {
    case Sided::two: return "two-sided";
    case Sided::less: return "less";
    case Sided::greater: return "greater";
  }
  return "two-sided";
}

double student_t_cdf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t(df), t);
}

double normal_two_sided_p(double z) {
  if (std::isinf(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::fabs(z)));
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

double mean(std::span<const double> x) {
  if (x.empty()) throw InsufficientData("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) throw InsufficientData("variance needs at least two values");
  const double m = mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return acc / static_cast<double>(x.size() - 1);
}

namespace {

double p_from_t(double t, double df, Sided sided) {
  switch (sided) {
    case Sided::less: return student_t_cdf(t, df);
    case Sided::greater: return student_t_cdf(-t, df);
    case Sided::two: {
      if (std::isinf(t)) return 0.0;
      const double tail = boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::fabs(t)));
      return std::min(1.0, 2.0 * tail);
    }
  }
  return 1.0;
}

}  // namespace

TTestResult t_test(std::span<const double> a, std::span<const double> b, Sided sided) {
  if (a.size() < 2 || b.size() < 2) throw InsufficientData("t_test needs at least two values per sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = variance(a) / na;
  const double vb = variance(b) / nb;
  const double se2 = va + vb;
  if (!(se2 > 0.0)) throw ZeroVariance("both samples are constant");

  TTestResult r;
  r.mean_a = mean(a);
  r.mean_b = mean(b);
  r.t = (r.mean_a - r.mean_b) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p = p_from_t(r.t, r.df, sided);
  return r;
}

TTestResult one_sample_t_test(std::span<const double> x, double mu0, Sided sided) {
  if (x.size() < 2) throw InsufficientData("one-sample t-test needs at least two values");
  TTestResult r;
  r.mean_a = mean(x);
  r.mean_b = mu0;
  r.df = static_cast<double>(x.size() - 1);
  const double se = std::sqrt(variance(x) / static_cast<double>(x.size()));
  const double diff = r.mean_a - mu0;
  if (se == 0.0) {
    if (diff == 0.0) throw ZeroVariance("constant sample equal to the null mean");
    r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  } else {
    r.t = diff / se;
  }
  r.p = p_from_t(r.t, r.df, sided);
  return r;
}

Summary summarize(std::span<const double> x) {
  Summary s;
  s.n = x.size();
  if (x.empty()) return s;
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  s.mean = mean(v);
  s.sd = v.size() > 1 ? std::sqrt(variance(v)) : 0.0;
  s.min = v.front();
  s.max = v.back();
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw InvalidInput("uniform_below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

std::vector<DiffRow> paired_diff_analysis(const std::vector<std::string>& cost_names,
                                          std::string_view condition,
                                          const std::vector<DiffContext>& contexts,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> diffs(cost_names.size());
  for (const auto& ctx : contexts) {
    if (ctx.alternatives.empty()) continue;
    const auto& alt = ctx.alternatives[uniform_below(rng, ctx.alternatives.size())];
    for (std::size_t c = 0; c < cost_names.size(); ++c) {
      if (c < ctx.human.size() && c < alt.size() && ctx.human[c] && alt[c]) {
        diffs[c].push_back(*ctx.human[c] - *alt[c]);
      }
    }
  }
  std::vector<DiffRow> rows;
  for (std::size_t c = 0; c < cost_names.size(); ++c) {
    DiffRow row;
    row.cost = cost_names[c];
    row.condition = std::string(condition);
    row.differences = summarize(diffs[c]);
    try {
      const auto test = one_sample_t_test(diffs[c], 0.0, Sided::less);
      row.t = test.t;
      row.p = test.p;
    } catch (const Error&) {
      // Too few or degenerate differences; reported as NaN.
      row.t = row.p = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

}  // namespace prodchoice::stats
