#include "recourse/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "recourse/error.hpp"
#include "recourse/rng.hpp"

namespace recourse {
namespace {

std::string kind_name(PlaneKind k) {
  switch (k) {
    case PlaneKind::continuous_feature: return "continuous-feature";
    case PlaneKind::categorical_feature: return "categorical-feature";
    case PlaneKind::prediction: return "prediction";
  }
  return "prediction";
}

PlaneKind kind_from(const std::string& s) {
  if (s == "continuous-feature") return PlaneKind::continuous_feature;
  if (s == "categorical-feature") return PlaneKind::categorical_feature;
  if (s == "prediction") return PlaneKind::prediction;
  throw ParseError("unknown plane kind '" + s + "'");
}

std::vector<std::size_t> fit_rows(std::size_t n) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_holdout(i) || n < 5) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> holdout_rows(std::size_t n) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    if (is_holdout(i)) rows.push_back(i);
  return rows.empty() ? fit_rows(n) : rows;
}

void check_samples(const std::vector<Vec>& z, std::size_t n_targets) {
  if (z.empty()) throw PreconditionError("no samples to fit");
  if (z.size() != n_targets) throw PreconditionError("need one target per sample");
  const std::size_t dim = z.front().size();
  if (dim == 0) throw PreconditionError("samples have zero dimension");
  for (const auto& v : z)
    if (v.size() != dim) throw PreconditionError("samples have inconsistent dimensions");
  if (z.size() < dim + 1)
    throw PreconditionError("need at least " + std::to_string(dim + 1) + " samples, got " + std::to_string(z.size()));
}

double soft_threshold(double x, double lambda) {
  if (x > lambda) return x - lambda;
  if (x < -lambda) return x + lambda;
  return 0.0;
}

}  // namespace

bool Hyperplane::degenerate() const { return !all_finite(normal) || !std::isfinite(offset) || norm(normal) == 0.0; }

nlohmann::json Hyperplane::to_json() const {
  return {{"normal", normal},       {"offset", offset},           {"kind", kind_name(kind)},
          {"feature", feature},     {"positive", positive},       {"fit_quality", fit_quality},
          {"converged", converged}};
}

Hyperplane Hyperplane::from_json(const nlohmann::json& doc) {
  try {
    Hyperplane h;
    h.normal = doc.at("normal").get<Vec>();
    h.offset = doc.at("offset").get<double>();
    h.kind = kind_from(doc.at("kind").get<std::string>());
    h.feature = doc.value("feature", "");
    h.positive = doc.value("positive", "");
    h.fit_quality = doc.value("fit_quality", 0.0);
    h.converged = doc.value("converged", true);
    if (h.degenerate()) throw ParseError("stored hyperplane is degenerate");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed hyperplane: ") + e.what());
  }
}

SamplerConfig SamplerConfig::from_data(const LatentCodec& codec, const std::vector<EncodedVector>& rows,
                                       double box_scale) {
  if (rows.empty()) throw PreconditionError("sampler statistics need at least one row");
  const std::size_t d = codec.latent_dim();
  SamplerConfig cfg;
  cfg.box_scale = box_scale;
  cfg.mean.assign(d, 0.0);
  cfg.stddev.assign(d, 0.0);
  std::vector<Vec> latents;
  latents.reserve(rows.size());
  for (const auto& r : rows) latents.push_back(codec.encode_latent(r).z);
  const double n = static_cast<double>(rows.size());
  for (const auto& z : latents) axpy(1.0 / n, z, cfg.mean);
  for (const auto& z : latents)
    for (std::size_t i = 0; i < d; ++i) cfg.stddev[i] += (z[i] - cfg.mean[i]) * (z[i] - cfg.mean[i]) / n;
  for (double& s : cfg.stddev) s = std::sqrt(s);
  return cfg;
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"distribution", "uniform-box"}, {"box_scale", box_scale}, {"mean", mean}, {"stddev", stddev}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& doc) {
  try {
    SamplerConfig cfg;
    cfg.box_scale = doc.at("box_scale").get<double>();
    cfg.mean = doc.at("mean").get<Vec>();
    cfg.stddev = doc.at("stddev").get<Vec>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed sampler config: ") + e.what());
  }
}

std::vector<LatentSample> sample_latent_space(const LatentCodec& codec, const Classifier& blackbox, std::size_t k,
                                              const SamplerConfig& sampler, std::uint64_t seed) {
  const std::size_t d = codec.latent_dim();
  if (sampler.mean.size() != d || sampler.stddev.size() != d)
    throw PreconditionError("sampler statistics do not match the latent dimension");
  if (k < d + 1) throw PreconditionError("sample count k must be at least latent_dim + 1 = " + std::to_string(d + 1));
  if (!(sampler.box_scale > 0.0)) throw PreconditionError("sampler box scale must be positive");

  Rng rng(seed);
  std::vector<LatentSample> out;
  out.reserve(k);
  std::vector<std::size_t> class_count(blackbox.num_classes(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    LatentSample s;
    s.z.z.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double half = sampler.box_scale * sampler.stddev[j];
      s.z.z[j] = rng.uniform(sampler.mean[j] - half, sampler.mean[j] + half);
    }
    s.decoded = codec.decode_latent(s.z);
    s.label = blackbox.predict(s.decoded).label;
    ++class_count[s.label];
    out.push_back(std::move(s));
  }
  const auto populated = std::count_if(class_count.begin(), class_count.end(), [](std::size_t c) { return c > 0; });
  if (populated < 2)
    throw TrainingError("every latent sample received the same black-box label; increase the sampler box scale or k");
  return out;
}

double lasso_objective(const std::vector<Vec>& z, const Vec& targets, std::span<const double> w, double b,
                       double lambda) {
  const auto rows = fit_rows(z.size());
  double sq = 0.0;
  for (std::size_t r : rows) {
    const double e = dot(w, z[r]) + b - targets[r];
    sq += e * e;
  }
  double l1 = 0.0;
  for (double v : w) l1 += std::abs(v);
  return sq / (2.0 * static_cast<double>(rows.size())) + lambda * l1;
}

Vec lasso_smooth_gradient(const std::vector<Vec>& z, const Vec& targets, const Hyperplane& plane) {
  const auto rows = fit_rows(z.size());
  Vec g(plane.normal.size(), 0.0);
  for (std::size_t r : rows) axpy(plane.signed_value(z[r]) - targets[r], z[r], g);
  for (double& v : g) v /= static_cast<double>(rows.size());
  return g;
}

Hyperplane fit_lasso(const std::vector<Vec>& z, const Vec& targets, const LassoConfig& cfg) {
  check_samples(z, targets.size());
  if (!(cfg.lambda >= 0.0)) throw PreconditionError("lasso lambda must be >= 0");
  const std::size_t d = z.front().size();
  const auto rows = fit_rows(z.size());
  const double m = static_cast<double>(rows.size());

  Vec zmean(d, 0.0);
  double tmean = 0.0;
  for (std::size_t r : rows) {
    axpy(1.0 / m, z[r], zmean);
    tmean += targets[r] / m;
  }
  // Column-major centered design for cache-friendly coordinate sweeps.
  std::vector<Vec> cols(d, Vec(rows.size()));
  Vec resid(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) cols[j][i] = z[rows[i]][j] - zmean[j];
    resid[i] = targets[rows[i]] - tmean;
  }
  Vec col_sq(d);
  for (std::size_t j = 0; j < d; ++j) col_sq[j] = dot(cols[j], cols[j]) / m;

  Vec w(d, 0.0);
  bool converged = false;
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    double max_delta = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (col_sq[j] == 0.0) continue;
      const double rho = dot(cols[j], resid) / m + col_sq[j] * w[j];
      const double next = soft_threshold(rho, cfg.lambda) / col_sq[j];
      const double delta = next - w[j];
      if (delta != 0.0) {
        axpy(-delta, cols[j], resid);
        w[j] = next;
      }
      max_delta = std::max(max_delta, std::abs(delta));
    }
    if (max_delta < cfg.tol) {
      converged = true;
      break;
    }
  }

  Hyperplane h;
  h.normal = w;
  h.offset = tmean - dot(w, zmean);
  h.kind = PlaneKind::continuous_feature;
  h.converged = converged;

  const auto held = holdout_rows(z.size());
  double hmean = 0.0;
  for (std::size_t r : held) hmean += targets[r] / static_cast<double>(held.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t r : held) {
    const double e = h.signed_value(z[r]) - targets[r];
    ss_res += e * e;
    ss_tot += (targets[r] - hmean) * (targets[r] - hmean);
  }
  h.fit_quality = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res <= 1e-24 ? 1.0 : 0.0);
  return h;
}

Hyperplane fit_linear_svm(const std::vector<Vec>& z, const std::vector<int>& labels, const SvmConfig& cfg) {
  check_samples(z, labels.size());
  if (!(cfg.c > 0.0)) throw PreconditionError("SVM C must be > 0");
  if (cfg.epochs == 0) throw PreconditionError("SVM epochs must be positive");
  for (int y : labels)
    if (y != 1 && y != -1) throw PreconditionError("SVM labels must be +1 or -1");
  const std::size_t d = z.front().size();
  auto rows = fit_rows(z.size());
  const bool has_pos = std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return labels[r] > 0; });
  const bool has_neg = std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return labels[r] < 0; });
  if (!has_pos || !has_neg) throw TrainingError("SVM needs both classes among the fitted samples");

  const double m = static_cast<double>(rows.size());
  Vec zmean(d, 0.0);
  for (std::size_t r : rows) axpy(1.0 / m, z[r], zmean);
  std::vector<Vec> zc(z.size());
  for (std::size_t r : rows) zc[r] = sub(z[r], zmean);

  // Pegasos on the centered data with the bias as a constant extra feature.
  const double lambda = 1.0 / (cfg.c * m);
  Vec w(d, 0.0);
  double b = 0.0;
  auto objective = [&](std::span<const double> ww, double bb) {
    double hinge = 0.0;
    for (std::size_t r : rows) hinge += std::max(0.0, 1.0 - labels[r] * (dot(ww, zc[r]) + bb));
    return 0.5 * (dot(ww, ww) + bb * bb) + cfg.c * hinge;
  };
  Vec best_w = w;
  double best_b = b;
  double best_obj = objective(w, b);

  Rng rng(cfg.seed);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(rows);
    for (std::size_t r : rows) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double y = labels[r];
      const double margin = y * (dot(w, zc[r]) + b);
      const double shrink = 1.0 - 1.0 / static_cast<double>(t);
      for (double& v : w) v *= shrink;
      b *= shrink;
      if (margin < 1.0) {
        axpy(eta * y, zc[r], w);
        b += eta * y;
      }
    }
    const double obj = objective(w, b);
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
      best_b = b;
    }
  }

  Hyperplane h;
  h.normal = best_w;
  h.offset = best_b - dot(best_w, zmean);
  h.kind = PlaneKind::prediction;
  const auto held = holdout_rows(z.size());
  std::size_t correct = 0;
  for (std::size_t r : held) {
    const int predicted = h.signed_value(z[r]) >= 0.0 ? 1 : -1;
    if (predicted == labels[r]) ++correct;
  }
  h.fit_quality = static_cast<double>(correct) / static_cast<double>(held.size());
  return h;
}

std::size_t SurrogateConfig::resolved_k(std::size_t latent_dim) const {
  if (k) return k;
  return std::min<std::size_t>(200 * latent_dim, 50000);
}

nlohmann::json SurrogateConfig::to_json() const {
  return {{"k", k},
          {"lasso", {{"lambda", lasso.lambda}, {"tol", lasso.tol}, {"max_iter", lasso.max_iter}}},
          {"svm", {{"C", svm.c}, {"epochs", svm.epochs}, {"seed", svm.seed}}},
          {"min_prediction_quality", min_prediction_quality}};
}

SurrogateConfig SurrogateConfig::from_json(const nlohmann::json& doc, SurrogateConfig cfg) {
  try {
    cfg.k = doc.value("k", cfg.k);
    if (doc.contains("lasso")) {
      const auto& l = doc["lasso"];
      cfg.lasso.lambda = l.value("lambda", cfg.lasso.lambda);
      cfg.lasso.tol = l.value("tol", cfg.lasso.tol);
      cfg.lasso.max_iter = l.value("max_iter", cfg.lasso.max_iter);
    }
    if (doc.contains("svm")) {
      const auto& s = doc["svm"];
      cfg.svm.c = s.value("C", cfg.svm.c);
      cfg.svm.epochs = s.value("epochs", cfg.svm.epochs);
      cfg.svm.seed = s.value("seed", cfg.svm.seed);
    }
    cfg.min_prediction_quality = doc.value("min_prediction_quality", cfg.min_prediction_quality);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed surrogate config: ") + e.what());
  }
  return cfg;
}

std::size_t SurrogateBundle::positive_label() const {
  auto idx = schema.label_index(prediction_plane.positive);
  if (!idx) throw PreconditionError("prediction plane names an unknown label '" + prediction_plane.positive + "'");
  return *idx;
}

const Hyperplane* SurrogateBundle::plane_for(const std::string& feature, const RawRow& row) const {
  auto it = feature_planes.find(feature);
  if (it == feature_planes.end() || it->second.empty()) return nullptr;
  const auto& spec = schema.feature(feature);
  if (!spec.is_categorical() || spec.categories.size() == 2) return &it->second.front();
  auto v = row.values.find(feature);
  if (v == row.values.end()) return nullptr;
  const auto* current = std::get_if<std::string>(&v->second);
  if (!current) return nullptr;
  for (const auto& plane : it->second)
    if (plane.positive == *current) return &plane;
  return nullptr;
}

SurrogateBundle build_surrogate(std::shared_ptr<const LatentCodec> codec, std::shared_ptr<const Classifier> blackbox,
                                const DatasetSchema& schema, const SamplerConfig& sampler,
                                const SurrogateConfig& config, std::uint64_t seed) {
  if (!codec || !blackbox) throw PreconditionError("surrogate needs a trained autoencoder and black box");
  if (codec->data_width() != schema.encoded_width() || blackbox->input_width() != schema.encoded_width())
    throw PreconditionError("model widths do not match the schema's encoded width");
  if (blackbox->num_classes() != schema.target_labels().size())
    throw PreconditionError("black box class count does not match the schema's target labels");

  const std::size_t k = config.resolved_k(codec->latent_dim());
  const auto samples = sample_latent_space(*codec, *blackbox, k, sampler, seed);
  std::vector<Vec> zs;
  zs.reserve(samples.size());
  for (const auto& s : samples) zs.push_back(s.z.z);

  SurrogateBundle bundle;
  bundle.schema = schema;
  bundle.codec = std::move(codec);
  bundle.blackbox = std::move(blackbox);
  bundle.sample_count = k;
  bundle.sampler = sampler;
  bundle.config = config;
  bundle.seed = seed;

  SvmConfig svm = config.svm;
  svm.seed = config.svm.seed ^ seed;

  // Prediction plane: positive side is target label 1 versus the rest.
  const std::size_t positive = 1;
  std::vector<int> ylab;
  for (const auto& s : samples) ylab.push_back(s.label == positive ? 1 : -1);
  Hyperplane pred = fit_linear_svm(zs, ylab, svm);
  pred.kind = PlaneKind::prediction;
  pred.positive = schema.target_labels()[positive];
  if (pred.degenerate()) throw TrainingError("prediction hyperplane fit is degenerate");
  if (pred.fit_quality < config.min_prediction_quality)
    throw TrainingError("prediction hyperplane holdout accuracy " + std::to_string(pred.fit_quality) +
                        " is below the minimum " + std::to_string(config.min_prediction_quality));
  bundle.prediction_plane = std::move(pred);

  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& spec = schema.feature(f);
    const std::size_t off = schema.offset(f);
    auto& planes = bundle.feature_planes[spec.name];
    if (!spec.is_categorical()) {
      Vec t;
      for (const auto& s : samples) t.push_back(s.decoded.data[off]);
      try {
        Hyperplane h = fit_lasso(zs, t, config.lasso);
        h.kind = PlaneKind::continuous_feature;
        h.feature = spec.name;
        if (h.degenerate())
          bundle.fit_failures[spec.name] = "lasso returned a zero normal (feature constant over the samples?)";
        else
          planes.push_back(std::move(h));
      } catch (const Error& e) {
        bundle.fit_failures[spec.name] = e.what();
      }
      continue;
    }
    std::vector<std::size_t> argmaxes;
    for (const auto& s : samples)
      argmaxes.push_back(argmax(std::span<const double>(s.decoded.data).subspan(off, spec.width())));
    const std::size_t first = spec.categories.size() == 2 ? 1 : 0;
    for (std::size_t c = first; c < spec.categories.size(); ++c) {
      const std::string key = spec.name + "=" + spec.categories[c];
      std::vector<int> y;
      for (std::size_t a : argmaxes) y.push_back(a == c ? 1 : -1);
      try {
        Hyperplane h = fit_linear_svm(zs, y, svm);
        h.kind = PlaneKind::categorical_feature;
        h.feature = spec.name;
        h.positive = spec.categories[c];
        if (h.degenerate())
          bundle.fit_failures[key] = "SVM returned a zero normal";
        else
          planes.push_back(std::move(h));
      } catch (const Error& e) {
        bundle.fit_failures[key] = e.what();
      }
    }
  }
  return bundle;
}

}  // namespace recourse
