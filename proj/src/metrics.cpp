#include "recourse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "recourse/csv.hpp"
#include "recourse/error.hpp"
#include "recourse/rng.hpp"

namespace recourse {

using nlohmann::json;

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::uint64_t row_seed(std::uint64_t seed, std::size_t i) {
  return seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(i) + 1));
}

}  // namespace

double proximity(const RawRow& x_in, const RawRow& c_in, const DatasetSchema& schema) {
  const RawRow x = canonical_row(x_in, schema);
  const RawRow c = canonical_row(c_in, schema);
  double sq = 0.0;
  std::size_t n_cat = 0, mismatches = 0;
  for (const auto& f : schema.features()) {
    const Value& a = x.values.at(f.name);
    const Value& b = c.values.at(f.name);
    if (f.is_categorical()) {
      ++n_cat;
      if (a != b) ++mismatches;
      continue;
    }
    const double diff = std::get<double>(a) - std::get<double>(b);
    const double scale = f.range() > 0.0 ? f.range() : 1.0;
    if (std::abs(diff) / scale <= kEqualityTolerance) continue;
    const double t = diff / f.mad_divisor();
    sq += t * t;
  }
  double out = std::sqrt(sq);
  if (n_cat > 0) out += static_cast<double>(mismatches) / static_cast<double>(n_cat);
  return out;
}

ExplainRequest VariantConfig::request_for(const RawRow& row) const {
  ExplainRequest req;
  req.row = row;
  req.variant = variant;
  req.target_feature = feature;
  req.free_set = free_set;
  req.eps0 = eps0;
  req.d_eps = d_eps;
  req.eps_max = eps_max;
  req.robust_margin_steps = margin_steps;
  req.seed = seed;
  return req;
}

json VariantConfig::to_json() const {
  json doc{{"variant", variant_name(variant)}, {"eps0", eps0},   {"d_eps", d_eps},
           {"eps_max", eps_max},               {"margin_steps", margin_steps}, {"seed", seed}};
  if (variant == Variant::ce2) doc["feature"] = feature.empty() ? json("all mutable") : json(feature);
  if (variant == Variant::ce3) doc["free_set"] = free_set;
  return doc;
}

EvalReport EvalReport::aggregate(std::vector<CaseRecord> cases, const VariantConfig& config) {
  EvalReport r;
  r.config = config;
  r.per_case = std::move(cases);
  r.n_cases = r.per_case.size();
  double sparsity = 0.0, prox = 0.0, runtime = 0.0;
  for (const auto& c : r.per_case) {
    runtime += c.runtime_us;
    if (!c.valid) continue;
    ++r.n_valid;
    sparsity += static_cast<double>(c.sparsity);
    prox += c.proximity;
  }
  if (r.n_cases > 0) {
    r.validity_pct = 100.0 * static_cast<double>(r.n_valid) / static_cast<double>(r.n_cases);
    r.mean_runtime_us = runtime / static_cast<double>(r.n_cases);
  }
  if (r.n_valid > 0) {
    r.mean_sparsity = sparsity / static_cast<double>(r.n_valid);
    r.mean_proximity = prox / static_cast<double>(r.n_valid);
  }
  return r;
}

bool EvalReport::consistent() const {
  const EvalReport again = aggregate(per_case, config);
  return again.n_cases == n_cases && again.n_valid == n_valid && again.validity_pct == validity_pct &&
         again.mean_sparsity == mean_sparsity && again.mean_proximity == mean_proximity &&
         again.mean_runtime_us == mean_runtime_us && validity_pct >= 0.0 && validity_pct <= 100.0 &&
         (!robustness_pct || (*robustness_pct >= 0.0 && *robustness_pct <= 100.0));
}

json EvalReport::to_json() const {
  json cases = json::array();
  for (const auto& c : per_case) {
    json rec{{"row", c.row_index},       {"valid", c.valid},           {"sparsity", c.sparsity},
             {"proximity", c.proximity}, {"runtime_us", c.runtime_us}};
    if (!c.feature.empty()) rec["feature"] = c.feature;
    if (!c.error.empty()) rec["error"] = c.error;
    cases.push_back(std::move(rec));
  }
  const bool any = n_valid > 0;
  return json{{"validity_pct", validity_pct},
              {"mean_sparsity", any ? json(mean_sparsity) : json(nullptr)},
              {"mean_proximity", any ? json(mean_proximity) : json(nullptr)},
              {"mean_runtime_us", mean_runtime_us},
              {"robustness_pct", robustness_pct ? json(*robustness_pct) : json(nullptr)},
              {"n_cases", n_cases},
              {"n_valid", n_valid},
              {"config", config.to_json()},
              {"per_case", std::move(cases)}};
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << "# proximity = MAD-scaled euclidean (continuous) + mismatch fraction (categorical);"
         " sparsity and proximity averaged over valid cases\n";
  const auto line = [&](const std::string& k, const std::string& v) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-18s %s\n", k.c_str(), v.c_str());
    out << buf;
  };
  line("variant", variant_name(config.variant));
  line("d_eps", fixed(config.d_eps, 3));
  line("cases", std::to_string(n_cases));
  line("validity_pct", fixed(validity_pct, 2));
  line("mean_sparsity", n_valid ? fixed(mean_sparsity, 3) : "-");
  line("mean_proximity", n_valid ? fixed(mean_proximity, 4) : "-");
  line("mean_runtime_us", fixed(mean_runtime_us, 1));
  if (robustness_pct) line("robustness_pct", fixed(*robustness_pct, 2));
  return out.str();
}

std::string EvalReport::per_case_csv() const {
  std::ostringstream out;
  out << "row,feature,valid,sparsity,proximity,runtime_us,error\n";
  for (const auto& c : per_case) {
    out << csv::format_row({std::to_string(c.row_index), c.feature, c.valid ? "true" : "false",
                            std::to_string(c.sparsity), fixed(c.proximity, 6), fixed(c.runtime_us, 1), c.error})
        << '\n';
  }
  return out.str();
}

EvalReport evaluate(const SurrogateBundle& bundle, const std::vector<RawRow>& rows, const VariantConfig& config) {
  if (rows.empty()) throw PreconditionError("evaluate needs at least one test row");
  std::vector<ExplainRequest> requests;
  std::vector<std::pair<std::size_t, std::string>> origin;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (config.variant == Variant::ce2 && config.feature.empty()) {
      for (const auto& f : bundle.schema.features()) {
        if (!f.is_mutable) continue;
        VariantConfig one = config;
        one.feature = f.name;
        requests.push_back(one.request_for(rows[i]));
        origin.emplace_back(i, f.name);
      }
    } else {
      requests.push_back(config.request_for(rows[i]));
      origin.emplace_back(i, config.variant == Variant::ce2 ? config.feature : std::string());
    }
  }
  const auto items = explain_batch(bundle, requests);
  std::vector<CaseRecord> cases;
  cases.reserve(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    CaseRecord c;
    c.row_index = origin[k].first;
    c.feature = origin[k].second;
    c.runtime_us = static_cast<double>(items[k].elapsed_us);
    if (items[k].result) {
      const auto& r = *items[k].result;
      c.valid = r.valid;
      c.sparsity = r.sparsity;
      c.proximity = r.proximity;
    } else {
      c.error = items[k].error;
    }
    cases.push_back(std::move(c));
  }
  return EvalReport::aggregate(std::move(cases), config);
}

json RobustnessPoint::to_json() const {
  return json{{"d_eps", d_eps},     {"robustness_pct", robustness_pct}, {"mean_proximity", mean_proximity},
              {"n_valid", n_valid}, {"n_robust", n_robust},             {"n_rerun_valid", n_rerun_valid}};
}

std::vector<RobustnessPoint> evaluate_robustness(const SurrogateBundle& bundle, const std::vector<RawRow>& rows,
                                                 const std::vector<double>& d_eps_list, double perturb_scale,
                                                 std::uint64_t seed, const VariantConfig& base) {
  if (!(perturb_scale >= 0.0)) throw PreconditionError("perturb_scale must be non-negative");
  const DatasetSchema& schema = bundle.schema;
  std::vector<RobustnessPoint> out;
  for (double d_eps : d_eps_list) {
    VariantConfig cfg = base;
    cfg.variant = Variant::ce1;
    cfg.d_eps = d_eps;
    RobustnessPoint point;
    point.d_eps = d_eps;
    double prox = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const RawRow x = canonical_row(rows[i], schema);
      const ExplainResult r = faster_ce1(bundle, cfg.request_for(x));
      if (!r.valid) continue;
      ++point.n_valid;
      prox += r.proximity;
      const RawRow& c = *r.counterfactual;
      const std::size_t target = bundle.blackbox->predict(encode(c, schema)).label;

      // Perturb the input on the changed features only, then apply the same
      // action (c - x) to the perturbed input.
      Rng rng(row_seed(seed, i));
      RawRow x_pert = x, c_pert = c;
      for (const auto& name : r.changed_features) {
        const FeatureSpec& f = schema.feature(name);
        if (f.is_categorical()) {
          if (rng.uniform() < perturb_scale)
            x_pert.values[name] = f.categories[rng.below(f.categories.size())];
          continue;  // categorical action: set to the counterfactual's category
        }
        const double u = rng.uniform(-perturb_scale, perturb_scale);
        if (u == 0.0) continue;
        const double xv = std::get<double>(x.values.at(name));
        const double moved = std::clamp(xv + u * f.range(), f.min, f.max);
        const double shift = moved - xv;
        x_pert.values[name] = moved;
        if (shift != 0.0)
          c_pert.values[name] = std::clamp(std::get<double>(c.values.at(name)) + shift, f.min, f.max);
      }
      if (bundle.blackbox->predict(encode(c_pert, schema)).label == target) ++point.n_robust;
      if (faster_ce1(bundle, cfg.request_for(x_pert)).valid) ++point.n_rerun_valid;
    }
    if (point.n_valid > 0) {
      point.robustness_pct = 100.0 * static_cast<double>(point.n_robust) / static_cast<double>(point.n_valid);
      point.mean_proximity = prox / static_cast<double>(point.n_valid);
    }
    out.push_back(point);
  }
  return out;
}

std::string robustness_table(const std::vector<RobustnessPoint>& points) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%8s %14s %14s %8s %8s\n", "d_eps", "robustness_pct", "mean_proximity", "valid",
                "robust");
  out << buf;
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%8.3f %14.2f %14.4f %8zu %8zu\n", p.d_eps, p.robustness_pct, p.mean_proximity,
                  p.n_valid, p.n_robust);
    out << buf;
  }
  return out.str();
}

}  // namespace recourse
