#include "fixture.hpp"

#include <algorithm>

#include "recourse/synthetic.hpp"

namespace fixture {

LatentVector RawValueCodec::encode_latent(const EncodedVector& x) const {
  LatentVector z{Vec(schema_.size())};
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    const auto& f = schema_.feature(i);
    z.z[i] = f.min + x.data[schema_.offset(i)] * f.range();
  }
  return z;
}

EncodedVector RawValueCodec::decode_latent(const LatentVector& z) const {
  EncodedVector x{Vec(schema_.encoded_width())};
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    const auto& f = schema_.feature(i);
    x.data[schema_.offset(i)] = (z.z[i] - f.min) / f.range();
  }
  return x;
}

Prediction ThresholdClassifier::predict(const EncodedVector& x) const {
  ++calls;
  const bool pos = x.data.at(slot_) > threshold_;
  return {pos ? 1u : 0u, pos ? Vec{0.0, 1.0} : Vec{1.0, 0.0}};
}

DatasetSchema continuous_schema(std::size_t n, double lo, double hi) {
  std::vector<FeatureSpec> fs;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureSpec f;
    f.name = "x" + std::to_string(i + 1);
    f.min = lo;
    f.max = hi;
    f.mad = (hi - lo) / 4.0;
    fs.push_back(f);
  }
  return DatasetSchema(fs, "y", {"neg", "pos"});
}

RawRow row(const std::vector<std::pair<std::string, double>>& values) {
  RawRow r;
  for (const auto& [k, v] : values) r.values[k] = v;
  return r;
}

TrainConfig blobs_blackbox_config() {
  TrainConfig c;
  c.epochs = 200;
  c.batch_size = 32;
  c.learning_rate = 0.5;
  c.seed = 7;
  return c;
}

TrainConfig blobs_autoencoder_config() {
  TrainConfig c = blobs_blackbox_config();
  c.epochs = 300;
  return c;
}

BlobsPipeline build_blobs_pipeline(std::size_t rows, std::uint64_t seed) {
  BlobsPipeline p;
  p.data = make_blobs(rows, seed);
  const auto& schema = p.data.schema;
  std::vector<EncodedVector> x;
  for (const auto& r : p.data.rows) x.push_back(encode(r, schema));

  const auto bb_cfg = blobs_blackbox_config();
  const auto ae_cfg = blobs_autoencoder_config();
  auto bb = train_blackbox(x, p.data.labels, {2, 2}, bb_cfg);
  auto ae = train_autoencoder(x, schema.block_layout(), {2, 2}, ae_cfg);
  p.blackbox_val_accuracy = bb.val_accuracy;
  p.autoencoder_recon_loss = ae.recon_loss;

  p.split = split_indices(x.size(), bb_cfg.split, bb_cfg.seed);
  std::vector<EncodedVector> train_x;
  for (std::size_t i : p.split.train) train_x.push_back(x[i]);
  for (std::size_t i : p.split.test) p.test_rows.push_back(p.data.rows[i]);

  auto codec = std::make_shared<Autoencoder>(std::move(ae.model));
  auto model = std::make_shared<BlackBox>(std::move(bb.model));
  const auto sampler = SamplerConfig::from_data(*codec, train_x, 3.0);
  p.bundle = build_surrogate(codec, model, schema, sampler, SurrogateConfig{}, seed + 7);
  return p;
}

const BlobsPipeline& blobs() {
  static const BlobsPipeline p = build_blobs_pipeline();
  return p;
}

std::string blobs_config_json(const std::string& csv, const std::string& artifacts_dir) {
  return R"({
  "data": ")" + csv + R"(",
  "artifacts_dir": ")" + artifacts_dir + R"(",
  "seed": 7,
  "blackbox": {"hidden": [], "train": {"epochs": 200, "batch_size": 32, "learning_rate": 0.5}},
  "autoencoder": {"hidden": [], "latent_dim": 2, "train": {"epochs": 300, "batch_size": 32, "learning_rate": 0.5}},
  "surrogate": {"sampler_scale": 3.0}
})";
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("recourse-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
