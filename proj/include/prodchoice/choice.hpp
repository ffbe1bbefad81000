#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prodchoice::choice {

enum class Condition { goal_directed, goal_agnostic };
std::string_view to_string(Condition c) noexcept;
Condition condition_from_string(std::string_view s);

struct Candidate {
  std::string candidate_id;
  double cost = 0.0;
  bool is_human = false;
};

struct ChoiceSet {
  std::string item_id;
  std::vector<Candidate> candidates;
  Condition condition = Condition::goal_directed;

  /// Exactly one human, at least two candidates, all costs finite.
  void validate() const;
  std::size_t human_index() const;
  std::vector<double> costs() const;
};

/// P_i proportional to exp(-alpha * C_i), max-shifted.
std::vector<double> softmax_choice(std::span<const double> costs, double alpha);

/// Every index attaining the minimum.
std::vector<std::size_t> argmin_choice(std::span<const double> costs);

/// 1 + number of candidates strictly cheaper than the human.
int rank_of_human(const ChoiceSet& set);

/// True when some alternative costs exactly what the human costs.
bool human_tied(const ChoiceSet& set);

/// Z-scores all candidate costs in place with the pooled mean and population
/// SD. Throws DegenerateVariance when every cost is equal.
void standardize_costs(std::vector<ChoiceSet>& sets);

struct PairwiseRow {
  int y = 0;
  double delta_cost = 0.0;
  int gd = 0;
  std::string cluster_id;
};

/// Human-vs-alternative comparisons in both orientations. Deltas are
/// standardized over the pooled population unless `standardize` is false.
std::vector<PairwiseRow> build_pairwise(const std::vector<ChoiceSet>& sets, bool standardize = true);

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct Diagnostics {
  int iterations = 0;
  int step_halvings = 0;
  double gradient_norm = 0.0;  // infinity norm of the per-observation mean gradient
  bool converged = false;
};

struct FitResult {
  std::string model;
  std::vector<Coefficient> coefficients;
  std::vector<std::string> excluded;  // all-zero design columns
  std::vector<std::vector<double>> covariance;
  std::vector<std::vector<double>> classical_covariance;
  std::string covariance_type;
  double loglik = 0.0;
  double per_item_loglik = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  Diagnostics diagnostics;
  std::optional<double> p_rank1;
  std::optional<double> p_best_vs_2nd;
  std::optional<Coefficient> combined;  // beta1 + beta3 for the pairwise model

  const Coefficient* find(std::string_view name) const;
};

inline constexpr double kZ975 = 1.959963985;
inline constexpr double kGradientTolerance = 1e-8;
inline constexpr int kMaxIterations = 100;
/// Relative log-likelihood drop a Newton step may show from rounding alone
/// before it is halved.
inline constexpr double kLoglikSlack = 1e-12;
/// Robust-to-classical variance ratio below which a coefficient's robust
/// variance counts as zero; such coefficients get se 0 and NaN z and p.
inline constexpr double kDegenerateVarianceRatio = 1e-16;

/// Logistic regression of y on [1, delta, gd, delta*gd] with CR1
/// cluster-robust covariance over cluster_id.
FitResult fit_pairwise_logit(const std::vector<PairwiseRow>& rows);

/// Scalar-alpha conditional logit over sets whose costs are already on the
/// desired scale.
FitResult fit_conditional_logit(const std::vector<ChoiceSet>& sets);

double condlogit_loglik(const std::vector<ChoiceSet>& sets, double alpha);
double condlogit_gradient(const std::vector<ChoiceSet>& sets, double alpha);

/// Conditional-logit metrics evaluated at a fixed alpha (alpha = 0 gives the
/// uniform baseline).
FitResult condlogit_at(const std::vector<ChoiceSet>& sets, double alpha, std::string model);

enum class ChanceConvention { candidates, alternatives };
std::string_view to_string(ChanceConvention c) noexcept;
ChanceConvention chance_convention_from_string(std::string_view s);

struct Rank1Row {
  std::string cost;
  Condition condition = Condition::goal_directed;
  std::size_t n_sets = 0;
  std::size_t n_rank1 = 0;
  std::size_t n_ties = 0;  // sets where the human ties an alternative
  double share = 0.0;
  double baseline_candidates = 0.0;  // mean 1/n_i, n_i counting the human
  double baseline_alternatives = 0.0;  // mean 1/n_i, n_i alternatives only
  double multiplier_candidates = 0.0;
  double multiplier_alternatives = 0.0;
  double p_candidates = 1.0;
  double p_alternatives = 1.0;
};

Rank1Row rank1_summary(std::string cost, Condition condition, const std::vector<ChoiceSet>& sets);

/// Rank counts (index r-1 holds the number of sets with human rank r).
std::vector<std::size_t> rank_histogram(const std::vector<ChoiceSet>& sets);

nlohmann::json to_json(const Coefficient& c);
nlohmann::json to_json(const FitResult& f);
FitResult fit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChoiceSet& s);
ChoiceSet choice_set_from_json(const nlohmann::json& j);

}  // namespace prodchoice::choice
