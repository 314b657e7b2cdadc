#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recourse/surrogate.hpp"

namespace recourse {

inline constexpr int kResultVersion = 1;

enum class Variant { ce1, ce2, ce3 };

std::string variant_name(Variant v);
Variant variant_from(const std::string& name);

struct ExplainRequest {
  RawRow row;
  Variant variant = Variant::ce1;
  std::string target_feature;      // CE2
  std::set<std::string> free_set;  // CE3
  double eps0 = 0.0;
  double d_eps = 0.1;
  double eps_max = 10.0;
  std::size_t robust_margin_steps = 0;
  std::uint64_t seed = 0;
  std::size_t perturb_budget = 50;

  /// Throws ParseError for malformed rows or hyperparameters and
  /// ConstraintError when the request asks to change an immutable feature.
  void validate(const DatasetSchema& schema) const;

  nlohmann::json to_json() const;
  /// Field-level ParseError on missing or mistyped members; absent
  /// hyperparameters keep the values in `defaults`.
  static ExplainRequest from_json(const nlohmann::json& doc) { return from_json(doc, ExplainRequest()); }
  static ExplainRequest from_json(const nlohmann::json& doc, const ExplainRequest& defaults);
};

struct SearchDirection {
  Vec unit;
  int sign = 1;
};

struct Diagnostics {
  int sign = 1;
  double intersection_residual = 0.0;
  bool intersection_converged = true;
  double plane_fit_quality = 0.0;  // prediction plane
  std::optional<double> feature_plane_fit_quality;
  std::size_t original_label = 0;
  std::optional<std::size_t> counterfactual_label;
  double eps_final = 0.0;
  /// Largest |cos| between the search direction and any frozen feature normal.
  double max_frozen_cosine = 0.0;
  std::vector<std::string> notes;
};

struct ExplainResult {
  Variant variant = Variant::ce1;
  std::optional<RawRow> counterfactual;
  bool valid = false;
  std::size_t steps_taken = 0;
  std::optional<double> eps_at_validity;
  std::vector<std::string> changed_features;
  double proximity = 0.0;
  std::size_t sparsity = 0;
  bool postprocessed = false;
  std::int64_t elapsed_us = 0;
  Diagnostics diagnostics;

  nlohmann::json to_json(bool include_timing = true) const;
};

/// +1 or -1 along the prediction plane normal. When the plane agrees with the
/// black box about z_test, the sign crosses the plane; otherwise it moves
/// away from it. A point exactly on the plane counts as the positive side.
int choose_sign(const SurrogateBundle& bundle, const LatentVector& z_test, std::size_t blackbox_label);

struct LineSearchOutcome {
  bool valid = false;
  std::size_t steps_taken = 0;
  std::optional<double> eps_at_validity;
  double eps_final = 0.0;
  LatentVector z_final;
  std::optional<RawRow> counterfactual;
  std::optional<std::size_t> label;
};

/// Walks z_start + eps * sign * unit for eps = eps0, eps0 + d_eps, ... <= eps_max,
/// querying the black box on each hardened decoded candidate. After the first
/// label flip, takes robust_margin_steps further steps and returns the last
/// point that is still valid.
LineSearchOutcome line_search(const SurrogateBundle& bundle, const LatentVector& z_start,
                              const SearchDirection& dir, const ExplainRequest& req, std::size_t original_label);

/// Keeps only feature `feature` from `candidate`, then widens its change until
/// the black box flips. Returns nullopt when the budget runs out.
std::optional<RawRow> postprocess_sparse(const RawRow& candidate, const RawRow& x_test, const std::string& feature,
                                         const Classifier& blackbox, const DatasetSchema& schema,
                                         std::size_t perturb_budget = 50, std::uint64_t seed = 0);

ExplainResult faster_ce1(const SurrogateBundle& bundle, const ExplainRequest& req);
ExplainResult faster_ce2(const SurrogateBundle& bundle, const ExplainRequest& req);
ExplainResult faster_ce3(const SurrogateBundle& bundle, const ExplainRequest& req);
ExplainResult explain(const SurrogateBundle& bundle, const ExplainRequest& req);

struct BatchItem {
  std::optional<ExplainResult> result;
  std::string error;       // empty on success
  std::string error_kind;  // "parse", "constraint", "direction", "precondition", "internal"
  std::string error_field;
  std::int64_t elapsed_us = 0;
};

/// Order-preserving; a failing item never aborts the batch.
std::vector<BatchItem> explain_batch(const SurrogateBundle& bundle, const std::vector<ExplainRequest>& requests);

nlohmann::json batch_item_to_json(const BatchItem& item, bool include_timing = true);

}  // namespace recourse
