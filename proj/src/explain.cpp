#include "recourse/explain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "recourse/error.hpp"
#include "recourse/geometry.hpp"
#include "recourse/metrics.hpp"
#include "recourse/rng.hpp"

namespace recourse {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t micros_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count();
}

std::size_t label_of(const Classifier& bb, const RawRow& row, const DatasetSchema& schema) {
  return bb.predict(encode(row, schema)).label;
}

// Same plane, shifted to pass through z. Keeps the feature's value where it
// is instead of dragging it to the plane's zero contour.
Hyperplane leveled_through(const Hyperplane& plane, const LatentVector& z) {
  Hyperplane out = plane;
  out.offset = -dot(plane.normal, z.z);
  return out;
}

SearchDirection unit_direction(Vec v, int sign) {
  const double n = norm(v);
  for (double& x : v) x /= n;
  return {std::move(v), sign};
}

// Points c toward the positive side of the prediction plane; the sign rule
// then decides which way to walk.
void orient_along(Vec& c, const Vec& normal) {
  if (dot(c, normal) < 0.0)
    for (double& x : c) x = -x;
}

struct Prepared {
  RawRow row;
  EncodedVector x;
  std::size_t label = 0;
  LatentVector z;
};

Prepared prepare(const SurrogateBundle& bundle, const ExplainRequest& req) {
  req.validate(bundle.schema);
  Prepared p;
  p.row = canonical_row(req.row, bundle.schema);
  p.x = encode(p.row, bundle.schema);
  p.label = bundle.blackbox->predict(p.x).label;
  p.z = bundle.codec->encode_latent(p.x);
  return p;
}

void finish(ExplainResult& r, const LineSearchOutcome& ls, const SurrogateBundle& bundle, const Prepared& p) {
  r.valid = ls.valid;
  r.steps_taken = ls.steps_taken;
  r.eps_at_validity = ls.eps_at_validity;
  r.diagnostics.eps_final = ls.eps_final;
  r.diagnostics.original_label = p.label;
  r.diagnostics.counterfactual_label = ls.label;
  if (ls.valid) r.counterfactual = ls.counterfactual;
  if (r.counterfactual) {
    const auto diff = l0_feature_diff(p.row, *r.counterfactual, bundle.schema);
    r.changed_features = diff.changed;
    r.sparsity = diff.count;
    r.proximity = proximity(p.row, *r.counterfactual, bundle.schema);
  }
}

double max_frozen_cosine(const Vec& unit, const std::map<std::string, Vec>& normals,
                         const std::set<std::string>& frozen) {
  double worst = 0.0;
  for (const auto& name : frozen) {
    const Vec& n = normals.at(name);
    const double nn = norm(n);
    if (nn > 0.0) worst = std::max(worst, std::abs(dot(unit, n)) / nn);
  }
  return worst;
}

// Normals of every feature's plane for this row. Features without a plane
// cannot be frozen geometrically; they are reported in the notes.
std::map<std::string, Vec> feature_normals(const SurrogateBundle& bundle, const RawRow& row,
                                           std::vector<std::string>& notes) {
  std::map<std::string, Vec> normals;
  for (const auto& f : bundle.schema.features()) {
    if (const Hyperplane* h = bundle.plane_for(f.name, row); h && !h->degenerate())
      normals.emplace(f.name, h->normal);
    else
      notes.push_back("no plane for feature '" + f.name + "'");
  }
  return normals;
}

double number_field(const json& doc, const char* key, double fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_number()) throw ParseError(std::string(key) + " must be a number", key);
  return v.get<double>();
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::ce1: return "ce1";
    case Variant::ce2: return "ce2";
    case Variant::ce3: return "ce3";
  }
  return "ce1";
}

Variant variant_from(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ce1") return Variant::ce1;
  if (s == "ce2") return Variant::ce2;
  if (s == "ce3") return Variant::ce3;
  throw ParseError("unknown variant '" + name + "' (expected ce1, ce2 or ce3)", "variant");
}

void ExplainRequest::validate(const DatasetSchema& schema) const {
  if (!(d_eps > 0.0) || !std::isfinite(d_eps)) throw ParseError("d_eps must be positive", "d_eps");
  if (!(eps0 >= 0.0) || !std::isfinite(eps0)) throw ParseError("eps0 must be non-negative", "eps0");
  if (!(eps_max > 0.0) || !std::isfinite(eps_max)) throw ParseError("eps_max must be positive", "eps_max");
  validate_row(row, schema);
  if (variant == Variant::ce2) {
    if (target_feature.empty()) throw ParseError("ce2 needs a target feature", "target_feature");
    if (!schema.index_of(target_feature))
      throw ParseError("unknown feature '" + target_feature + "'", "target_feature");
    if (!schema.feature(target_feature).is_mutable)
      throw ConstraintError("feature '" + target_feature + "' is immutable", "target_feature");
  }
  if (variant == Variant::ce3) {
    if (free_set.empty()) throw ParseError("ce3 needs a non-empty free set", "free_set");
    for (const auto& name : free_set) {
      if (!schema.index_of(name)) throw ParseError("unknown feature '" + name + "'", "free_set");
      if (!schema.feature(name).is_mutable)
        throw ConstraintError("feature '" + name + "' is immutable", "free_set");
    }
  }
}

json ExplainRequest::to_json() const {
  json doc{{"row", row_to_json(row)},
           {"variant", variant_name(variant)},
           {"eps0", eps0},
           {"d_eps", d_eps},
           {"eps_max", eps_max},
           {"robust_margin_steps", robust_margin_steps},
           {"seed", seed}};
  if (variant == Variant::ce2) doc["target_feature"] = target_feature;
  if (variant == Variant::ce3) doc["free_set"] = free_set;
  return doc;
}

ExplainRequest ExplainRequest::from_json(const json& doc, const ExplainRequest& defaults) {
  if (!doc.is_object()) throw ParseError("request must be a JSON object");
  ExplainRequest req = defaults;
  req.row = {};
  req.free_set.clear();
  req.target_feature.clear();
  if (!doc.contains("row")) throw ParseError("missing field 'row'", "row");
  if (!doc.at("row").is_object()) throw ParseError("row must be an object", "row");
  req.row = row_from_json(doc.at("row"));
  if (doc.contains("variant")) {
    if (!doc.at("variant").is_string()) throw ParseError("variant must be a string", "variant");
    req.variant = variant_from(doc.at("variant").get<std::string>());
  }
  if (doc.contains("target_feature")) {
    if (!doc.at("target_feature").is_string())
      throw ParseError("target_feature must be a string", "target_feature");
    req.target_feature = doc.at("target_feature").get<std::string>();
  }
  if (doc.contains("free_set")) {
    const auto& fs = doc.at("free_set");
    if (!fs.is_array()) throw ParseError("free_set must be an array of feature names", "free_set");
    for (const auto& v : fs) {
      if (!v.is_string()) throw ParseError("free_set must be an array of feature names", "free_set");
      req.free_set.insert(v.get<std::string>());
    }
  }
  req.eps0 = number_field(doc, "eps0", req.eps0);
  req.d_eps = number_field(doc, "d_eps", req.d_eps);
  req.eps_max = number_field(doc, "eps_max", req.eps_max);
  if (doc.contains("robust_margin_steps")) {
    const auto& v = doc.at("robust_margin_steps");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ParseError("robust_margin_steps must be a non-negative integer", "robust_margin_steps");
    req.robust_margin_steps = v.get<std::size_t>();
  }
  if (doc.contains("seed")) {
    const auto& v = doc.at("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw ParseError("seed must be a non-negative integer", "seed");
    req.seed = v.get<std::uint64_t>();
  }
  return req;
}

json ExplainResult::to_json(bool include_timing) const {
  json diag{{"sign", diagnostics.sign},
            {"intersection_residual", diagnostics.intersection_residual},
            {"intersection_converged", diagnostics.intersection_converged},
            {"plane_fit_quality", diagnostics.plane_fit_quality},
            {"feature_plane_fit_quality", diagnostics.feature_plane_fit_quality
                                              ? json(*diagnostics.feature_plane_fit_quality)
                                              : json(nullptr)},
            {"original_label", diagnostics.original_label},
            {"counterfactual_label", diagnostics.counterfactual_label ? json(*diagnostics.counterfactual_label)
                                                                      : json(nullptr)},
            {"eps_final", diagnostics.eps_final},
            {"max_frozen_cosine", diagnostics.max_frozen_cosine},
            {"notes", diagnostics.notes}};
  json doc{{"version", kResultVersion},
           {"variant", variant_name(variant)},
           {"valid", valid},
           {"counterfactual", counterfactual ? row_to_json(*counterfactual) : json(nullptr)},
           {"steps_taken", steps_taken},
           {"eps_at_validity", eps_at_validity ? json(*eps_at_validity) : json(nullptr)},
           {"changed_features", changed_features},
           {"proximity", proximity},
           {"sparsity", sparsity},
           {"postprocessed", postprocessed},
           {"diagnostics", std::move(diag)}};
  if (include_timing) doc["elapsed_us"] = elapsed_us;
  return doc;
}

int choose_sign(const SurrogateBundle& bundle, const LatentVector& z_test, std::size_t blackbox_label) {
  const double s = bundle.prediction_plane.signed_value(z_test.z);
  const int s_lin = s >= 0.0 ? 1 : -1;
  const bool plane_says_positive = s_lin > 0;
  const bool bb_says_positive = blackbox_label == bundle.positive_label();
  return plane_says_positive == bb_says_positive ? -s_lin : s_lin;
}

LineSearchOutcome line_search(const SurrogateBundle& bundle, const LatentVector& z_start, const SearchDirection& dir,
                              const ExplainRequest& req, std::size_t original_label) {
  if (dir.unit.size() != z_start.size()) throw PreconditionError("line_search: direction width mismatch");
  if (!(req.d_eps > 0.0)) throw PreconditionError("line_search: d_eps must be positive");

  struct Candidate {
    LatentVector z;
    EncodedVector hard;
    std::size_t label;
  };
  const auto at = [&](std::size_t i) {
    const double eps = req.eps0 + static_cast<double>(i) * req.d_eps;
    Candidate c;
    c.z = z_start;
    axpy(eps * dir.sign, dir.unit, c.z.z);
    c.hard = harden(bundle.codec->decode_latent(c.z), bundle.schema);
    c.label = bundle.blackbox->predict(c.hard).label;
    return std::pair{eps, c};
  };

  LineSearchOutcome out;
  out.z_final = z_start;
  const double limit = req.eps_max + 1e-12;
  for (std::size_t i = 0;; ++i) {
    auto [eps, cand] = at(i);
    if (eps > limit) break;
    out.eps_final = eps;
    out.z_final = cand.z;
    if (cand.label == original_label) continue;

    out.valid = true;
    out.eps_at_validity = eps;
    out.steps_taken = i;
    out.label = cand.label;
    EncodedVector best = std::move(cand.hard);
    for (std::size_t m = 1; m <= req.robust_margin_steps; ++m) {
      auto [eps_m, next] = at(i + m);
      if (next.label == original_label) break;
      out.steps_taken = i + m;
      out.eps_final = eps_m;
      out.z_final = next.z;
      out.label = next.label;
      best = std::move(next.hard);
    }
    out.counterfactual = decode(best, bundle.schema);
    return out;
  }
  return out;
}

std::optional<RawRow> postprocess_sparse(const RawRow& candidate_in, const RawRow& x_in, const std::string& feature,
                                         const Classifier& blackbox, const DatasetSchema& schema,
                                         std::size_t perturb_budget, std::uint64_t seed) {
  const RawRow candidate = canonical_row(candidate_in, schema);
  const RawRow x_test = canonical_row(x_in, schema);
  const FeatureSpec& spec = schema.feature(feature);
  const std::size_t original = label_of(blackbox, x_test, schema);

  RawRow row = x_test;
  row.values[feature] = candidate.values.at(feature);
  if (label_of(blackbox, row, schema) != original) return row;

  if (spec.is_categorical()) {
    // Try the other categories in order, starting after the candidate's.
    const auto& cats = spec.categories;
    const std::size_t start = *spec.category_index(std::get<std::string>(row.values[feature]));
    const std::string& own = std::get<std::string>(x_test.values.at(feature));
    std::size_t tried = 0;
    for (std::size_t k = 1; k < cats.size() && tried < perturb_budget; ++k) {
      const std::string& c = cats[(start + k) % cats.size()];
      if (c == own) continue;
      ++tried;
      row.values[feature] = c;
      if (label_of(blackbox, row, schema) != original) return row;
    }
    return std::nullopt;
  }

  const double range = spec.range();
  if (!(range > 0.0)) return std::nullopt;
  const double x = normalized_value(spec, std::get<double>(x_test.values.at(feature)));
  double d = normalized_value(spec, std::get<double>(candidate.values.at(feature))) - x;
  if (std::abs(d) < kEqualityTolerance) {
    Rng rng(seed);
    d = rng.uniform() < 0.5 ? -0.01 : 0.01;
  }
  for (std::size_t trial = 0; trial < perturb_budget; ++trial) {
    d *= 1.5;
    const double v = std::clamp(x + d, 0.0, 1.0);
    row.values[feature] = spec.min + v * range;
    if (label_of(blackbox, row, schema) != original) return row;
    if (v == 0.0 || v == 1.0) break;  // clamped: further widening changes nothing
  }
  return std::nullopt;
}

ExplainResult faster_ce1(const SurrogateBundle& bundle, const ExplainRequest& req) {
  const auto t0 = Clock::now();
  ExplainResult r;
  r.variant = Variant::ce1;
  const Prepared p = prepare(bundle, req);

  const Hyperplane& plane = bundle.prediction_plane;
  const LatentVector z_proj = project_onto_hyperplane(p.z, plane);
  const int sign = choose_sign(bundle, p.z, p.label);
  const SearchDirection dir = unit_direction(plane.normal, sign);
  r.diagnostics.sign = sign;
  r.diagnostics.plane_fit_quality = plane.fit_quality;
  r.diagnostics.intersection_residual = plane_distance(z_proj.z, plane);

  finish(r, line_search(bundle, z_proj, dir, req, p.label), bundle, p);
  r.elapsed_us = micros_since(t0);
  return r;
}

ExplainResult faster_ce2(const SurrogateBundle& bundle, const ExplainRequest& req) {
  const auto t0 = Clock::now();
  ExplainResult r;
  r.variant = Variant::ce2;
  const Prepared p = prepare(bundle, req);
  const std::string& a = req.target_feature;

  const Hyperplane* plane_a = bundle.plane_for(a, p.row);
  if (!plane_a || plane_a->degenerate()) throw DirectionError("sparse direction unavailable for feature " + a);

  const Hyperplane& pred = bundle.prediction_plane;
  auto normals = feature_normals(bundle, p.row, r.diagnostics.notes);
  std::set<std::string> frozen;
  for (const auto& [name, n] : normals)
    if (name != a) frozen.insert(name);
  std::vector<Hyperplane> planes{pred};
  for (const auto& name : frozen) planes.push_back(leveled_through(*bundle.plane_for(name, p.row), p.z));
  const auto inter = project_onto_intersection(p.z, planes);
  const auto basis = orthogonalize_directions(normals, frozen, {a});
  if (!basis.directions.count(a)) throw DirectionError("sparse direction unavailable for feature " + a);

  Vec c = basis.directions.at(a);
  orient_along(c, pred.normal);
  const int sign = choose_sign(bundle, p.z, p.label);
  const SearchDirection dir = unit_direction(std::move(c), sign);

  r.diagnostics.sign = sign;
  r.diagnostics.plane_fit_quality = pred.fit_quality;
  r.diagnostics.feature_plane_fit_quality = plane_a->fit_quality;
  r.diagnostics.intersection_residual = inter.residual;
  r.diagnostics.intersection_converged = inter.converged;
  r.diagnostics.max_frozen_cosine = max_frozen_cosine(dir.unit, normals, frozen);

  const auto ls = line_search(bundle, inter.z, dir, req, p.label);
  finish(r, ls, bundle, p);
  if (r.valid && !(r.sparsity == 1 && r.changed_features.front() == a)) {
    auto sparse = postprocess_sparse(*r.counterfactual, p.row, a, *bundle.blackbox, bundle.schema,
                                     req.perturb_budget, req.seed);
    r.postprocessed = true;
    if (sparse) {
      r.counterfactual = std::move(sparse);
      const auto diff = l0_feature_diff(p.row, *r.counterfactual, bundle.schema);
      r.changed_features = diff.changed;
      r.sparsity = diff.count;
      r.proximity = proximity(p.row, *r.counterfactual, bundle.schema);
      r.diagnostics.counterfactual_label = label_of(*bundle.blackbox, *r.counterfactual, bundle.schema);
    } else {
      r.valid = false;
      r.counterfactual.reset();
      r.changed_features.clear();
      r.sparsity = 0;
      r.proximity = 0.0;
      r.diagnostics.counterfactual_label.reset();
      r.diagnostics.notes.push_back("sparse post-processing exhausted its budget");
    }
  }
  r.elapsed_us = micros_since(t0);
  return r;
}

ExplainResult faster_ce3(const SurrogateBundle& bundle, const ExplainRequest& req) {
  const auto t0 = Clock::now();
  ExplainResult r;
  r.variant = Variant::ce3;
  const Prepared p = prepare(bundle, req);

  const Hyperplane& pred = bundle.prediction_plane;
  auto normals = feature_normals(bundle, p.row, r.diagnostics.notes);
  std::set<std::string> frozen, free;
  for (const auto& [name, n] : normals) (req.free_set.count(name) ? free : frozen).insert(name);
  std::vector<Hyperplane> planes{pred};
  for (const auto& name : frozen) planes.push_back(leveled_through(*bundle.plane_for(name, p.row), p.z));
  const auto inter = project_onto_intersection(p.z, planes);
  const auto basis = orthogonalize_directions(normals, frozen, free);

  Vec sum(bundle.latent_dim(), 0.0);
  for (const auto& [name, c] : basis.directions) {
    Vec u = scaled(c, 1.0 / norm(c));
    orient_along(u, pred.normal);
    axpy(1.0, u, sum);
  }
  if (basis.directions.empty() || norm(sum) <= kDegenerateTolerance)
    throw DirectionError("no feasible constrained direction");
  for (const auto& name : basis.unreachable)
    r.diagnostics.notes.push_back("feature '" + name + "' has no direction independent of the frozen features");

  const int sign = choose_sign(bundle, p.z, p.label);
  const SearchDirection dir = unit_direction(std::move(sum), sign);
  r.diagnostics.sign = sign;
  r.diagnostics.plane_fit_quality = pred.fit_quality;
  r.diagnostics.intersection_residual = inter.residual;
  r.diagnostics.intersection_converged = inter.converged;
  r.diagnostics.max_frozen_cosine = max_frozen_cosine(dir.unit, normals, frozen);

  finish(r, line_search(bundle, inter.z, dir, req, p.label), bundle, p);
  r.elapsed_us = micros_since(t0);
  return r;
}

ExplainResult explain(const SurrogateBundle& bundle, const ExplainRequest& req) {
  switch (req.variant) {
    case Variant::ce1: return faster_ce1(bundle, req);
    case Variant::ce2: return faster_ce2(bundle, req);
    case Variant::ce3: return faster_ce3(bundle, req);
  }
  throw PreconditionError("unknown variant");
}

std::vector<BatchItem> explain_batch(const SurrogateBundle& bundle, const std::vector<ExplainRequest>& requests) {
  std::vector<BatchItem> items;
  items.reserve(requests.size());
  for (const auto& req : requests) {
    BatchItem item;
    const auto t0 = Clock::now();
    try {
      item.result = explain(bundle, req);
    } catch (const ParseError& e) {
      item.error = e.what();
      item.error_kind = "parse";
      item.error_field = e.field();
    } catch (const ConstraintError& e) {
      item.error = e.what();
      item.error_kind = "constraint";
      item.error_field = e.field();
    } catch (const DirectionError& e) {
      item.error = e.what();
      item.error_kind = "direction";
    } catch (const PreconditionError& e) {
      item.error = e.what();
      item.error_kind = "precondition";
    } catch (const std::exception& e) {
      item.error = e.what();
      item.error_kind = "internal";
    }
    item.elapsed_us = micros_since(t0);
    items.push_back(std::move(item));
  }
  return items;
}

json batch_item_to_json(const BatchItem& item, bool include_timing) {
  if (item.result) return item.result->to_json(include_timing);
  json err{{"code", item.error_kind}, {"message", item.error}};
  if (!item.error_field.empty()) err["field"] = item.error_field;
  json doc{{"error", std::move(err)}};
  if (include_timing) doc["elapsed_us"] = item.elapsed_us;
  return doc;
}

}  // namespace recourse
