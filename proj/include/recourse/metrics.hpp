#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recourse/explain.hpp"

namespace recourse {

/// MAD-normalized Euclidean distance over continuous features plus the
/// fraction of categorical features that differ. Continuous differences within
/// kEqualityTolerance (normalized units) count as zero.
double proximity(const RawRow& x, const RawRow& c, const DatasetSchema& schema);

struct VariantConfig {
  Variant variant = Variant::ce1;
  std::string feature;  // CE2; empty runs every mutable feature
  std::set<std::string> free_set;
  double eps0 = 0.0;
  double d_eps = 0.1;
  double eps_max = 10.0;
  std::size_t margin_steps = 0;
  std::uint64_t seed = 0;

  ExplainRequest request_for(const RawRow& row) const;
  nlohmann::json to_json() const;
};

struct CaseRecord {
  std::size_t row_index = 0;
  std::string feature;
  bool valid = false;
  std::size_t sparsity = 0;
  double proximity = 0.0;
  double runtime_us = 0.0;
  std::string error;
};

struct EvalReport {
  double validity_pct = 0.0;
  double mean_sparsity = 0.0;   // over valid cases
  double mean_proximity = 0.0;  // over valid cases
  double mean_runtime_us = 0.0; // over all cases
  std::optional<double> robustness_pct;
  std::size_t n_cases = 0;
  std::size_t n_valid = 0;
  std::vector<CaseRecord> per_case;
  VariantConfig config;

  static EvalReport aggregate(std::vector<CaseRecord> cases, const VariantConfig& config);
  /// True when the aggregates equal a recomputation from per_case.
  bool consistent() const;

  nlohmann::json to_json() const;
  std::string to_table() const;
  std::string per_case_csv() const;
};

EvalReport evaluate(const SurrogateBundle& bundle, const std::vector<RawRow>& rows, const VariantConfig& config);

struct RobustnessPoint {
  double d_eps = 0.0;
  double robustness_pct = 0.0;  // over valid explanations
  double mean_proximity = 0.0;
  std::size_t n_valid = 0;
  std::size_t n_robust = 0;
  std::size_t n_rerun_valid = 0;

  nlohmann::json to_json() const;
};

/// For each row: explain with CE1, perturb the input on the features the
/// explanation changed, apply the same recourse (counterfactual minus input)
/// to the perturbed input, and count the explanation robust when the black
/// box still assigns the counterfactual's class.
std::vector<RobustnessPoint> evaluate_robustness(const SurrogateBundle& bundle, const std::vector<RawRow>& rows,
                                                 const std::vector<double>& d_eps_list, double perturb_scale,
                                                 std::uint64_t seed, const VariantConfig& base = {});

std::string robustness_table(const std::vector<RobustnessPoint>& points);

}  // namespace recourse
