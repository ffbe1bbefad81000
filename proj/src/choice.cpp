#include "prodchoice/choice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "prodchoice/error.hpp"
#include "prodchoice/stats.hpp"

namespace prodchoice::choice {

using nlohmann::json;

std::string_view to_string(Condition c) noexcept {
  return c == Condition::goal_directed ? "goal_directed" : "goal_agnostic";
}

Condition condition_from_string(std::string_view s) {
  if (s == "goal_directed") return Condition::goal_directed;
  if (s == "goal_agnostic") return Condition::goal_agnostic;
  throw InvalidInput("unknown condition '" + std::string(s) + "'");
}

void ChoiceSet::validate() const {
  if (candidates.size() < 2) throw InvalidInput("choice set " + item_id + " has fewer than two candidates");
  std::size_t humans = 0;
  for (const auto& c : candidates) {
    if (!std::isfinite(c.cost)) throw InvalidInput("choice set " + item_id + " has a non-finite cost");
    humans += c.is_human ? 1 : 0;
  }
  if (humans != 1) throw InvalidInput("choice set " + item_id + " must contain exactly one human candidate");
}

std::size_t ChoiceSet::human_index() const {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].is_human) return i;
  }
  throw InvalidInput("choice set " + item_id + " has no human candidate");
}

std::vector<double> ChoiceSet::costs() const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(c.cost);
  return out;
}

std::vector<double> softmax_choice(std::span<const double> costs, double alpha) {
  if (costs.empty()) throw InvalidInput("softmax over an empty set");
  std::vector<double> out(costs.size());
  double top = -std::numeric_limits<double>::infinity();
  for (double c : costs) top = std::max(top, -alpha * c);
  double z = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    out[i] = std::exp(-alpha * costs[i] - top);
    z += out[i];
  }
  for (double& p : out) p /= z;
  return out;
}

std::vector<std::size_t> argmin_choice(std::span<const double> costs) {
  if (costs.empty()) throw InvalidInput("argmin over an empty set");
  const double lo = *std::min_element(costs.begin(), costs.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] == lo) out.push_back(i);
  }
  return out;
}

int rank_of_human(const ChoiceSet& set) {
  const double h = set.candidates[set.human_index()].cost;
  int rank = 1;
  for (const auto& c : set.candidates) {
    if (!c.is_human && c.cost < h) ++rank;
  }
  return rank;
}

bool human_tied(const ChoiceSet& set) {
  const double h = set.candidates[set.human_index()].cost;
  return std::any_of(set.candidates.begin(), set.candidates.end(),
                     [&](const Candidate& c) { return !c.is_human && c.cost == h; });
}

void standardize_costs(std::vector<ChoiceSet>& sets) {
  std::vector<double> all;
  for (const auto& s : sets) {
    for (const auto& c : s.candidates) all.push_back(c.cost);
  }
  if (all.empty()) throw InsufficientData("no costs to standardize");
  const double mu = stats::mean(all);
  double ss = 0.0;
  for (double v : all) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / static_cast<double>(all.size()));
  if (!(sd > 0.0)) throw DegenerateVariance("all costs are equal");
  for (auto& s : sets) {
    for (auto& c : s.candidates) c.cost = (c.cost - mu) / sd;
  }
}

std::vector<PairwiseRow> build_pairwise(const std::vector<ChoiceSet>& sets, bool standardize) {
  std::vector<PairwiseRow> rows;
  for (const auto& s : sets) {
    s.validate();
    const double h = s.candidates[s.human_index()].cost;
    const int gd = s.condition == Condition::goal_directed ? 1 : 0;
    for (const auto& c : s.candidates) {
      if (c.is_human) continue;
      const double d = h - c.cost;
      rows.push_back({1, d, gd, s.item_id});
      rows.push_back({0, -d, gd, s.item_id});
    }
  }
  if (!standardize || rows.empty()) return rows;
  double mu = 0.0;
  for (const auto& r : rows) mu += r.delta_cost;
  mu /= static_cast<double>(rows.size());
  double ss = 0.0;
  for (const auto& r : rows) ss += (r.delta_cost - mu) * (r.delta_cost - mu);
  const double sd = std::sqrt(ss / static_cast<double>(rows.size()));
  if (!(sd > 0.0)) throw DegenerateVariance("all cost differences are equal");
  for (auto& r : rows) r.delta_cost = (r.delta_cost - mu) / sd;
  return rows;
}

const Coefficient* FitResult::find(std::string_view name) const {
  for (const auto& c : coefficients) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

namespace {

Coefficient make_coefficient(std::string name, double est, double var) {
  Coefficient c;
  c.name = std::move(name);
  c.estimate = est;
  c.se = std::sqrt(std::max(0.0, var));
  c.ci_low = est - kZ975 * c.se;
  c.ci_high = est + kZ975 * c.se;
  if (c.se > 0.0) {
    c.z = est / c.se;
    c.p = stats::normal_two_sided_p(c.z);
  } else {
    c.z = est == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), est);
    c.p = est == 0.0 ? 1.0 : 0.0;
  }
  return c;
}

std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll;
}

}  // namespace

FitResult fit_pairwise_logit(const std::vector<PairwiseRow>& rows) {
  if (rows.empty()) throw InsufficientData("pairwise fit needs at least one row");
  static const char* kNames[] = {"intercept", "delta", "gd", "delta_x_gd"};
  const auto n = static_cast<Eigen::Index>(rows.size());

  Eigen::MatrixXd full(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[i];
    if (r.y != 0 && r.y != 1) throw InvalidInput("pairwise y must be 0 or 1");
    if (!std::isfinite(r.delta_cost)) throw InvalidInput("non-finite pairwise delta");
    full(i, 0) = 1.0;
    full(i, 1) = r.delta_cost;
    full(i, 2) = r.gd;
    full(i, 3) = r.delta_cost * r.gd;
    y(i) = r.y;
  }

  FitResult fit;
  fit.model = "pairwise_logit";
  std::vector<int> keep;
  for (int j = 0; j < 4; ++j) {
    if (full.col(j).cwiseAbs().maxCoeff() > 0.0) {
      keep.push_back(j);
    } else {
      fit.excluded.emplace_back(kNames[j]);
    }
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd X(n, k);
  for (Eigen::Index j = 0; j < k; ++j) X.col(j) = full.col(keep[j]);
  if (Eigen::FullPivLU<Eigen::MatrixXd>(X).rank() < k) throw NonIdentifiable("pairwise design columns are collinear");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd p(n);
  Eigen::MatrixXd H(k, k);
  double ll = logit_loglik(X, y, beta);
  auto& diag = fit.diagnostics;
  for (diag.iterations = 0;; ++diag.iterations) {
    const Eigen::VectorXd eta = X * beta;
    for (Eigen::Index i = 0; i < n; ++i) p(i) = logistic(eta(i));
    const Eigen::VectorXd grad = X.transpose() * (y - p);
    diag.gradient_norm = grad.cwiseAbs().maxCoeff() / static_cast<double>(n);
    const Eigen::VectorXd w = p.array() * (1.0 - p.array());
    H = X.transpose() * w.asDiagonal() * X;
    if (diag.gradient_norm <= kGradientTolerance) {
      diag.converged = true;
      break;
    }
    if (diag.iterations >= kMaxIterations) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) break;
    const Eigen::VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double ll_next = logit_loglik(X, y, next);
    while (ll_next < ll - kLoglikSlack * std::max(1.0, std::fabs(ll)) && t > 1e-10) {
      t *= 0.5;
      ++diag.step_halvings;
      next = beta + t * step;
      ll_next = logit_loglik(X, y, next);
    }
    beta = next;
    ll = ll_next;
  }

  const Eigen::VectorXd eta = X * beta;
  bool separated = true;
  for (Eigen::Index i = 0; i < n && separated; ++i) {
    separated = y(i) == 1.0 ? eta(i) > 0.0 : eta(i) < 0.0;
  }
  if (separated) throw PerfectSeparation("outcomes are perfectly separated by the design");
  if (!diag.converged) {
    throw NonConvergence("pairwise logit did not converge after " + std::to_string(diag.iterations) +
                         " iterations (gradient norm " + std::to_string(diag.gradient_norm) + ", " +
                         std::to_string(diag.step_halvings) + " step halvings)");
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
  if (!lu.isInvertible()) throw NonIdentifiable("information matrix is singular");
  const Eigen::MatrixXd bread = lu.inverse();

  std::map<std::string, Eigen::VectorXd> scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [it, inserted] = scores.try_emplace(rows[i].cluster_id, Eigen::VectorXd::Zero(k));
    it->second += X.row(i).transpose() * (y(i) - p(i));
  }
  const auto g = static_cast<double>(scores.size());
  if (scores.size() < 2) throw InsufficientData("cluster-robust covariance needs at least two clusters");
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (const auto& [id, s] : scores) meat += s * s.transpose();
  Eigen::MatrixXd cov = (g / (g - 1.0)) * bread * meat * bread;
  cov = 0.5 * (cov + cov.transpose());

  for (Eigen::Index j = 0; j < k; ++j) {
    auto c = make_coefficient(kNames[keep[j]], beta(j), cov(j, j));
    // Every cluster's score for this column cancels (e.g. the intercept and
    // GD terms when each pair appears in both orientations): the robust
    // variance is rounding noise and no test is possible.
    if (cov(j, j) <= kDegenerateVarianceRatio * bread(j, j)) {
      c.se = 0.0;
      c.ci_low = c.ci_high = c.estimate;
      c.z = c.p = std::numeric_limits<double>::quiet_NaN();
    }
    fit.coefficients.push_back(std::move(c));
  }
  auto pos = [&](int col) -> Eigen::Index {
    auto it = std::find(keep.begin(), keep.end(), col);
    return it == keep.end() ? -1 : static_cast<Eigen::Index>(it - keep.begin());
  };
  const auto b1 = pos(1);
  const auto b3 = pos(3);
  if (b1 >= 0 && b3 >= 0) {
    fit.combined = make_coefficient("delta_plus_delta_x_gd", beta(b1) + beta(b3),
                                    cov(b1, b1) + cov(b3, b3) + 2.0 * cov(b1, b3));
  }
  fit.covariance = to_rows(cov);
  fit.classical_covariance = to_rows(bread);
  fit.covariance_type = "CR1 cluster-robust (G/(G-1))";
  fit.loglik = logit_loglik(X, y, beta);
  fit.n_obs = rows.size();
  fit.n_clusters = scores.size();
  fit.per_item_loglik = fit.loglik / static_cast<double>(fit.n_obs);
  return fit;
}

namespace {

struct SetMoments {
  double log_p_human = 0.0;
  double mean_cost = 0.0;
  double var_cost = 0.0;
};

SetMoments set_moments(const ChoiceSet& s, double alpha) {
  const auto c = s.costs();
  const auto p = softmax_choice(c, alpha);
  SetMoments m;
  for (std::size_t i = 0; i < c.size(); ++i) m.mean_cost += p[i] * c[i];
  for (std::size_t i = 0; i < c.size(); ++i) m.var_cost += p[i] * (c[i] - m.mean_cost) * (c[i] - m.mean_cost);
  // log softmax of the human via log-sum-exp.
  double top = -std::numeric_limits<double>::infinity();
  for (double v : c) top = std::max(top, -alpha * v);
  double z = 0.0;
  for (double v : c) z += std::exp(-alpha * v - top);
  m.log_p_human = -alpha * c[s.human_index()] - top - std::log(z);
  return m;
}

void validate_sets(const std::vector<ChoiceSet>& sets) {
  if (sets.empty()) throw InsufficientData("conditional logit needs at least one choice set");
  for (const auto& s : sets) s.validate();
}

}  // namespace

double condlogit_loglik(const std::vector<ChoiceSet>& sets, double alpha) {
  double ll = 0.0;
  for (const auto& s : sets) ll += set_moments(s, alpha).log_p_human;
  return ll;
}

double condlogit_gradient(const std::vector<ChoiceSet>& sets, double alpha) {
  double g = 0.0;
  for (const auto& s : sets) g += set_moments(s, alpha).mean_cost - s.candidates[s.human_index()].cost;
  return g;
}

FitResult condlogit_at(const std::vector<ChoiceSet>& sets, double alpha, std::string model) {
  validate_sets(sets);
  FitResult fit;
  fit.model = std::move(model);
  fit.n_obs = sets.size();
  fit.n_clusters = sets.size();
  double rank1 = 0.0;
  double best2 = 0.0;
  for (const auto& s : sets) {
    fit.loglik += set_moments(s, alpha).log_p_human;
    const auto c = s.costs();
    const auto p = softmax_choice(c, alpha);
    for (auto i : argmin_choice(c)) rank1 += p[i];
    auto sorted = c;
    std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end());
    best2 = best2 + logistic(alpha * (sorted[1] - sorted[0]));
  }
  const auto n = static_cast<double>(sets.size());
  fit.per_item_loglik = fit.loglik / n;
  fit.p_rank1 = rank1 / n;
  fit.p_best_vs_2nd = best2 / n;
  fit.coefficients.push_back(make_coefficient("alpha", alpha, 0.0));
  fit.covariance = {{0.0}};
  fit.classical_covariance = {{0.0}};
  fit.covariance_type = "fixed";
  fit.diagnostics.converged = true;
  return fit;
}

FitResult fit_conditional_logit(const std::vector<ChoiceSet>& sets) {
  validate_sets(sets);
  bool any_variation = false;
  bool human_always_min = true;
  bool human_always_max = true;
  for (const auto& s : sets) {
    const auto c = s.costs();
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    if (*lo == *hi) continue;
    any_variation = true;
    const double h = c[s.human_index()];
    human_always_min = human_always_min && h == *lo;
    human_always_max = human_always_max && h == *hi;
  }
  if (!any_variation) throw NonIdentifiable("every choice set has constant costs");
  if (human_always_min || human_always_max) {
    throw PerfectSeparation("the human candidate is always at the cost extreme; alpha is unbounded");
  }

  const auto n = static_cast<double>(sets.size());
  double alpha = 0.0;
  double ll = condlogit_loglik(sets, alpha);
  double hess = 0.0;
  Diagnostics diag;
  for (diag.iterations = 0;; ++diag.iterations) {
    double grad = 0.0;
    hess = 0.0;
    for (const auto& s : sets) {
      const auto m = set_moments(s, alpha);
      grad += m.mean_cost - s.candidates[s.human_index()].cost;
      hess -= m.var_cost;
    }
    diag.gradient_norm = std::fabs(grad) / n;
    if (diag.gradient_norm <= kGradientTolerance) {
      diag.converged = true;
      break;
    }
    if (diag.iterations >= kMaxIterations || !(hess < 0.0)) break;
    const double step = -grad / hess;
    double t = 1.0;
    double next = alpha + step;
    double ll_next = condlogit_loglik(sets, next);
    while (ll_next < ll - kLoglikSlack * std::max(1.0, std::fabs(ll)) && t > 1e-10) {
      t *= 0.5;
      ++diag.step_halvings;
      next = alpha + t * step;
      ll_next = condlogit_loglik(sets, next);
    }
    alpha = next;
    ll = ll_next;
  }
  if (!diag.converged) {
    throw NonConvergence("conditional logit did not converge after " + std::to_string(diag.iterations) +
                         " iterations (gradient norm " + std::to_string(diag.gradient_norm) + ")");
  }

  FitResult fit = condlogit_at(sets, alpha, "conditional_logit");
  const double var = -1.0 / hess;
  fit.coefficients = {make_coefficient("alpha", alpha, var)};
  fit.covariance = {{var}};
  fit.classical_covariance = {{var}};
  fit.covariance_type = "observed information";
  fit.diagnostics = diag;
  return fit;
}

std::string_view to_string(ChanceConvention c) noexcept {
  return c == ChanceConvention::candidates ? "candidates" : "alternatives";
}

ChanceConvention chance_convention_from_string(std::string_view s) {
  if (s == "candidates") return ChanceConvention::candidates;
  if (s == "alternatives") return ChanceConvention::alternatives;
  throw ConfigError("unknown chance convention '" + std::string(s) + "'");
}

Rank1Row rank1_summary(std::string cost, Condition condition, const std::vector<ChoiceSet>& sets) {
  Rank1Row row;
  row.cost = std::move(cost);
  row.condition = condition;
  row.n_sets = sets.size();
  if (sets.empty()) return row;
  std::vector<double> p_cand;
  std::vector<double> p_alt;
  for (const auto& s : sets) {
    s.validate();
    if (rank_of_human(s) == 1) ++row.n_rank1;
    if (human_tied(s)) ++row.n_ties;
    const auto k = static_cast<double>(s.candidates.size());
    p_cand.push_back(1.0 / k);
    p_alt.push_back(1.0 / (k - 1.0));
  }
  const auto n = static_cast<double>(sets.size());
  row.share = static_cast<double>(row.n_rank1) / n;
  row.baseline_candidates = std::accumulate(p_cand.begin(), p_cand.end(), 0.0) / n;
  row.baseline_alternatives = std::accumulate(p_alt.begin(), p_alt.end(), 0.0) / n;
  row.multiplier_candidates = row.share / row.baseline_candidates;
  row.multiplier_alternatives = row.share / row.baseline_alternatives;
  row.p_candidates = stats::poisson_binomial_pvalue(p_cand, row.n_rank1);
  row.p_alternatives = stats::poisson_binomial_pvalue(p_alt, row.n_rank1);
  return row;
}

std::vector<std::size_t> rank_histogram(const std::vector<ChoiceSet>& sets) {
  std::vector<std::size_t> hist;
  for (const auto& s : sets) {
    const auto r = static_cast<std::size_t>(rank_of_human(s));
    if (hist.size() < r) hist.resize(r, 0);
    ++hist[r - 1];
  }
  return hist;
}

json to_json(const Coefficient& c) {
  return {{"name", c.name}, {"estimate", c.estimate}, {"se", c.se}, {"ci_low", c.ci_low},
          {"ci_high", c.ci_high}, {"z", c.z}, {"p", c.p}};
}

namespace {

Coefficient coefficient_from_json(const json& j) {
  Coefficient c;
  c.name = j.at("name").get<std::string>();
  c.estimate = j.at("estimate").get<double>();
  c.se = j.at("se").get<double>();
  c.ci_low = j.at("ci_low").get<double>();
  c.ci_high = j.at("ci_high").get<double>();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  c.z = j.at("z").is_number() ? j.at("z").get<double>() : nan;
  c.p = j.at("p").is_number() ? j.at("p").get<double>() : nan;
  return c;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(); }

}  // namespace

json to_json(const FitResult& f) {
  json coefs = json::array();
  for (const auto& c : f.coefficients) coefs.push_back(to_json(c));
  return {{"model", f.model},
          {"coefficients", std::move(coefs)},
          {"excluded", f.excluded},
          {"combined", f.combined ? to_json(*f.combined) : json()},
          {"covariance", f.covariance},
          {"classical_covariance", f.classical_covariance},
          {"covariance_type", f.covariance_type},
          {"loglik", f.loglik},
          {"per_item_loglik", f.per_item_loglik},
          {"n_obs", f.n_obs},
          {"n_clusters", f.n_clusters},
          {"p_rank1", optional_number(f.p_rank1)},
          {"p_best_vs_2nd", optional_number(f.p_best_vs_2nd)},
          {"diagnostics",
           {{"iterations", f.diagnostics.iterations},
            {"step_halvings", f.diagnostics.step_halvings},
            {"gradient_norm", f.diagnostics.gradient_norm},
            {"converged", f.diagnostics.converged}}}};
}

FitResult fit_from_json(const json& j) {
  FitResult f;
  try {
    f.model = j.at("model").get<std::string>();
    for (const auto& c : j.at("coefficients")) f.coefficients.push_back(coefficient_from_json(c));
    f.excluded = j.value("excluded", std::vector<std::string>{});
    if (j.contains("combined") && !j.at("combined").is_null()) f.combined = coefficient_from_json(j.at("combined"));
    f.covariance = j.at("covariance").get<std::vector<std::vector<double>>>();
    f.classical_covariance = j.value("classical_covariance", std::vector<std::vector<double>>{});
    f.covariance_type = j.value("covariance_type", "");
    f.loglik = j.at("loglik").get<double>();
    f.per_item_loglik = j.at("per_item_loglik").get<double>();
    f.n_obs = j.at("n_obs").get<std::size_t>();
    f.n_clusters = j.value("n_clusters", std::size_t{0});
    if (j.contains("p_rank1") && !j.at("p_rank1").is_null()) f.p_rank1 = j.at("p_rank1").get<double>();
    if (j.contains("p_best_vs_2nd") && !j.at("p_best_vs_2nd").is_null()) {
      f.p_best_vs_2nd = j.at("p_best_vs_2nd").get<double>();
    }
    const auto& d = j.at("diagnostics");
    f.diagnostics.iterations = d.at("iterations").get<int>();
    f.diagnostics.step_halvings = d.at("step_halvings").get<int>();
    f.diagnostics.gradient_norm = d.at("gradient_norm").get<double>();
    f.diagnostics.converged = d.at("converged").get<bool>();
  } catch (const json::exception& ex) {
    throw InvalidInput(std::string("bad fit file: ") + ex.what());
  }
  return f;
}

json to_json(const ChoiceSet& s) {
  json cands = json::array();
  for (const auto& c : s.candidates) {
    cands.push_back({{"candidate_id", c.candidate_id}, {"cost", c.cost}, {"is_human", c.is_human}});
  }
  return {{"item_id", s.item_id}, {"condition", to_string(s.condition)}, {"candidates", std::move(cands)}};
}

ChoiceSet choice_set_from_json(const json& j) {
  ChoiceSet s;
  s.item_id = j.at("item_id").get<std::string>();
  s.condition = condition_from_string(j.at("condition").get<std::string>());
  for (const auto& c : j.at("candidates")) {
    s.candidates.push_back({c.at("candidate_id").get<std::string>(), c.at("cost").get<double>(),
                            c.at("is_human").get<bool>()});
  }
  return s;
}

}  // namespace prodchoice::choice
