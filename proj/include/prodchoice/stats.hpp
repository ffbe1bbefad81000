#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prodchoice::stats {

/// Distribution of K = sum of independent Bernoulli(p_i).
struct PoissonBinomial {
  std::vector<double> probabilities;
  std::vector<double> pmf;  // P(K = k), k = 0..N
};

/// Exact pmf by iterative convolution.
PoissonBinomial poisson_binomial_pmf(std::span<const double> probs);

/// One-sided upper tail P(K >= k_obs).
double poisson_binomial_pvalue(std::span<const double> probs, std::size_t k_obs);
double upper_tail(const PoissonBinomial& dist, std::size_t k_obs);

enum class Sided { two, less, greater };
std::string_view to_string(Sided s) noexcept;

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

/// Welch two-sample t-test with Welch-Satterthwaite degrees of freedom.
/// `less` tests mean(a) < mean(b).
TTestResult t_test(std::span<const double> a, std::span<const double> b, Sided sided);

/// One-sample t-test of mean(x) against mu0. A zero-variance sample whose mean
/// differs from mu0 yields t = +/-inf rather than an error.
TTestResult one_sample_t_test(std::span<const double> x, double mu0, Sided sided);

/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Two-sided normal-approximation p-value for a z statistic.
double normal_two_sided_p(double z);
double normal_quantile(double p);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};
Summary summarize(std::span<const double> x);

double mean(std::span<const double> x);
/// Sample variance (n - 1 denominator).
double variance(std::span<const double> x);

/// Unbiased integer in [0, n) by rejection on the raw engine output, so the
/// stream is identical across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

/// One context for the human-minus-alternative difference analysis; costs are
/// indexed by measure, nullopt where a measure is undefined.
struct DiffContext {
  std::vector<std::optional<double>> human;
  std::vector<std::vector<std::optional<double>>> alternatives;
};

struct DiffRow {
  std::string cost;
  std::string condition;
  Summary differences;
  double t = 0.0;
  double p = 1.0;
};

/// Samples one alternative per context (seeded), forms human - alternative
/// differences per cost measure and tests mean < 0 with a one-sided t-test.
std::vector<DiffRow> paired_diff_analysis(const std::vector<std::string>& cost_names,
                                          std::string_view condition,
                                          const std::vector<DiffContext>& contexts,
                                          std::uint64_t seed);

/// Significance stars at the .05/.01/.001 thresholds.
std::string stars(double p);

}  // namespace prodchoice::stats
