#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prodchoice/costs.hpp"

namespace prodchoice::align {

struct TertileEdges {
  double lower = 0.0;
  double upper = 0.0;
};

/// 1/3 and 2/3 quantiles of `values` with midpoint interpolation.
TertileEdges tertile_edges(std::span<const double> values);

/// Bin in {0,1,2}; values equal to an edge go to the lower bin.
int bin_of(double value, const TertileEdges& edges);

struct Stratum {
  int length_bin = 0;
  int uid_global_bin = 0;
  int index() const noexcept { return 3 * length_bin + uid_global_bin; }
};
inline constexpr int kStrataCount = 9;

/// Largest total T with T * q_s <= available_s for every human-occupied
/// stratum, split across strata by floor plus largest remainder.
struct Allocation {
  std::size_t total = 0;
  std::vector<std::size_t> counts;
  /// Human-occupied strata with nothing available; dropped before scaling.
  std::vector<std::size_t> empty_strata;
};
Allocation allocate(std::span<const std::size_t> human_counts, std::span<const std::size_t> available);

struct Candidate {
  std::string candidate_id;
  costs::CostBundle bundle;
};

struct StratumReport {
  Stratum stratum;
  std::size_t human_count = 0;
  double human_proportion = 0.0;
  std::size_t available = 0;
  std::size_t target = 0;
  std::size_t achieved = 0;
};

struct StratificationResult {
  TertileEdges length_edges;
  TertileEdges uid_global_edges;
  std::vector<StratumReport> strata;
  std::vector<std::string> selected_candidate_ids;  // sorted
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

Stratum stratum_of(const costs::CostBundle& b, const TertileEdges& length_edges,
                   const TertileEdges& uid_global_edges);

StratificationResult stratified_sample(const std::vector<costs::CostBundle>& human,
                                       const std::vector<Candidate>& generated, std::uint64_t seed);

struct DistributionTest {
  std::string cost;
  std::size_t n_human = 0;
  std::size_t n_generated = 0;
  double mean_human = 0.0;
  double mean_generated = 0.0;
  double t = 0.0;
  double p = 1.0;
  bool flagged = false;  // p < alpha
};

inline constexpr double kAlignmentAlpha = 0.001;

/// Welch two-sided tests per cost measure; uid_local uses defined values only.
std::vector<DistributionTest> distribution_tests(const std::vector<costs::CostBundle>& human,
                                                 const std::vector<costs::CostBundle>& generated,
                                                 double alpha = kAlignmentAlpha);

std::vector<DistributionTest> verify_alignment(const StratificationResult& result,
                                               const std::vector<costs::CostBundle>& human,
                                               const std::vector<Candidate>& generated,
                                               double alpha = kAlignmentAlpha);

nlohmann::json to_json(const StratificationResult& r);
StratificationResult stratification_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<DistributionTest>& tests);

}  // namespace prodchoice::align
