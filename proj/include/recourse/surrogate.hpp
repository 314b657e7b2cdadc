#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "recourse/model_api.hpp"
#include "recourse/tabular.hpp"

namespace recourse {

enum class PlaneKind { continuous_feature, categorical_feature, prediction };

/// Affine surface {z : <normal, z> + offset = 0} in latent space.
/// `positive` names the category (categorical planes) or target label
/// (prediction plane) on the positive side.
struct Hyperplane {
  Vec normal;
  double offset = 0.0;
  PlaneKind kind = PlaneKind::continuous_feature;
  std::string feature;
  std::string positive;
  double fit_quality = 0.0;  // R^2 (lasso) or accuracy (SVM) on held-out samples
  bool converged = true;

  double signed_value(std::span<const double> z) const { return dot(normal, z) + offset; }
  bool degenerate() const;

  nlohmann::json to_json() const;
  static Hyperplane from_json(const nlohmann::json& doc);

  bool operator==(const Hyperplane&) const = default;
};

/// Uniform box [mean - box_scale*stddev, mean + box_scale*stddev] per latent dimension.
struct SamplerConfig {
  double box_scale = 3.0;
  Vec mean;
  Vec stddev;

  /// Statistics of the encoder's image of `rows`.
  static SamplerConfig from_data(const LatentCodec& codec, const std::vector<EncodedVector>& rows,
                                 double box_scale = 3.0);

  nlohmann::json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& doc);
};

struct LatentSample {
  LatentVector z;
  EncodedVector decoded;
  std::size_t label = 0;
};

std::vector<LatentSample> sample_latent_space(const LatentCodec& codec, const Classifier& blackbox, std::size_t k,
                                              const SamplerConfig& sampler, std::uint64_t seed);

/// Every fifth sample (index % 5 == 4) is held out to score a fit.
inline bool is_holdout(std::size_t i) { return i % 5 == 4; }

struct LassoConfig {
  double lambda = 1e-3;
  double tol = 1e-6;
  std::size_t max_iter = 10000;
};

struct SvmConfig {
  double c = 1.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 11;
};

/// Coordinate descent on (1/2m) sum (<w,z> + b - t)^2 + lambda |w|_1 over the
/// non-holdout samples; b is unpenalized.
Hyperplane fit_lasso(const std::vector<Vec>& z, const Vec& targets, const LassoConfig& cfg);

/// Smooth-part gradient (1/m) sum z_d (<w,z> + b - t) over the non-holdout samples.
Vec lasso_smooth_gradient(const std::vector<Vec>& z, const Vec& targets, const Hyperplane& plane);
double lasso_objective(const std::vector<Vec>& z, const Vec& targets, std::span<const double> w, double b,
                       double lambda);

/// Pegasos-style subgradient descent on (1/2)|w|^2 + C sum hinge(1 - y(<w,z> + b)).
/// Labels are +1 / -1.
Hyperplane fit_linear_svm(const std::vector<Vec>& z, const std::vector<int>& labels, const SvmConfig& cfg);

struct SurrogateConfig {
  std::size_t k = 0;  // 0: 200 * latent_dim, capped at 50,000
  LassoConfig lasso;
  SvmConfig svm;
  double min_prediction_quality = 0.5;

  std::size_t resolved_k(std::size_t latent_dim) const;
  nlohmann::json to_json() const;
  static SurrogateConfig from_json(const nlohmann::json& doc) { return from_json(doc, SurrogateConfig()); }
  static SurrogateConfig from_json(const nlohmann::json& doc, SurrogateConfig defaults);
};

/// Autoencoder, black box, schema and every fitted plane.
struct SurrogateBundle {
  DatasetSchema schema;
  std::shared_ptr<const Classifier> blackbox;
  std::shared_ptr<const LatentCodec> codec;
  /// One plane per continuous or binary feature; one per category for
  /// features with more than two categories.
  std::map<std::string, std::vector<Hyperplane>> feature_planes;
  Hyperplane prediction_plane;
  std::map<std::string, std::string> fit_failures;
  std::size_t sample_count = 0;
  SamplerConfig sampler;
  SurrogateConfig config;
  std::uint64_t seed = 0;

  std::size_t latent_dim() const { return codec->latent_dim(); }
  /// Label index on the prediction plane's positive side.
  std::size_t positive_label() const;
  /// The plane standing for `feature` when explaining `row`, or nullptr.
  const Hyperplane* plane_for(const std::string& feature, const RawRow& row) const;
};

SurrogateBundle build_surrogate(std::shared_ptr<const LatentCodec> codec, std::shared_ptr<const Classifier> blackbox,
                                const DatasetSchema& schema, const SamplerConfig& sampler,
                                const SurrogateConfig& config, std::uint64_t seed);

}  // namespace recourse
