#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "recourse/explain.hpp"
#include "recourse/neural.hpp"
#include "recourse/surrogate.hpp"
#include "recourse/tabular.hpp"

namespace fixture {

using namespace recourse;

/// Latent vector == raw continuous feature values; encoded slots are their
/// min-max images. Only meaningful for all-continuous schemas.
class RawValueCodec final : public LatentCodec {
 public:
  explicit RawValueCodec(DatasetSchema schema) : schema_(std::move(schema)) {}
  LatentVector encode_latent(const EncodedVector& x) const override;
  EncodedVector decode_latent(const LatentVector& z) const override;
  std::size_t latent_dim() const override { return schema_.size(); }
  std::size_t data_width() const override { return schema_.encoded_width(); }

 private:
  DatasetSchema schema_;
};

/// Label 1 iff x[slot] > threshold (on encoded slots).
class ThresholdClassifier final : public Classifier {
 public:
  ThresholdClassifier(std::size_t width, std::size_t slot, double threshold)
      : width_(width), slot_(slot), threshold_(threshold) {}
  Prediction predict(const EncodedVector& x) const override;
  std::size_t input_width() const override { return width_; }
  std::size_t num_classes() const override { return 2; }
  mutable std::size_t calls = 0;

 private:
  std::size_t width_, slot_;
  double threshold_;
};

/// Same label whatever the input.
class ConstantClassifier final : public Classifier {
 public:
  explicit ConstantClassifier(std::size_t width) : width_(width) {}
  Prediction predict(const EncodedVector&) const override { return {0, {1.0, 0.0}}; }
  std::size_t input_width() const override { return width_; }
  std::size_t num_classes() const override { return 2; }

 private:
  std::size_t width_;
};

/// Continuous features x1..xn on [lo, hi], labels {"neg", "pos"}.
DatasetSchema continuous_schema(std::size_t n, double lo, double hi);

RawRow row(const std::vector<std::pair<std::string, double>>& values);

/// Blobs dataset -> linear black box -> linear-encoder autoencoder -> surrogate.
struct BlobsPipeline {
  Dataset data;
  DataSplit split;
  std::vector<RawRow> test_rows;
  SurrogateBundle bundle;
  double blackbox_val_accuracy = 0.0;
  double autoencoder_recon_loss = 0.0;
};

TrainConfig blobs_blackbox_config();
TrainConfig blobs_autoencoder_config();

BlobsPipeline build_blobs_pipeline(std::size_t rows = 500, std::uint64_t seed = 1);
/// Built once per process.
const BlobsPipeline& blobs();

/// Project config JSON matching build_blobs_pipeline, with data at `csv`.
std::string blobs_config_json(const std::string& csv, const std::string& artifacts_dir);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace fixture
