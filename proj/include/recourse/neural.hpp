#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "recourse/model_api.hpp"
#include "recourse/rng.hpp"

namespace recourse {

enum class Activation { identity, sigmoid, softmax };

/// Output activation applied to a contiguous run of output units.
struct HeadSegment {
  std::size_t offset = 0;
  std::size_t width = 0;
  Activation activation = Activation::identity;

  bool operator==(const HeadSegment&) const = default;
};

std::vector<HeadSegment> softmax_head(std::size_t width);
std::vector<HeadSegment> identity_head(std::size_t width);
/// Sigmoid on continuous slots, softmax on each categorical block.
std::vector<HeadSegment> decoder_head(const std::vector<BlockSpan>& layout);

/// Fully connected ReLU network. All weights and biases live in one flat
/// parameter vector; layer k has a (size[k+1] x size[k]) row-major weight
/// block followed by its bias.
class Mlp {
 public:
  struct Trace {
    std::vector<Vec> inputs;  // inputs[k] feeds layer k
    std::vector<Vec> pre;     // pre-activations of layer k
  };

  Mlp() = default;
  /// Zero-initialized network.
  Mlp(std::vector<std::size_t> layer_sizes, std::vector<HeadSegment> head);
  /// Glorot-uniform weights, zero biases.
  Mlp(std::vector<std::size_t> layer_sizes, std::vector<HeadSegment> head, Rng& rng);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  const std::vector<HeadSegment>& head() const { return head_; }
  std::size_t input_width() const { return sizes_.front(); }
  std::size_t output_width() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  Vec& parameters() { return params_; }
  const Vec& parameters() const { return params_; }

  Vec logits(std::span<const double> x, Trace* trace = nullptr) const;
  Vec forward(std::span<const double> x) const;
  /// Accumulates d(loss)/d(params) into `grad` (same layout as parameters())
  /// given d(loss)/d(logits). Writes d(loss)/d(input) when `dinput` is set.
  void backward(const Trace& trace, std::span<const double> dlogits, std::span<double> grad,
                Vec* dinput = nullptr) const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& doc);

  bool operator==(const Mlp&) const = default;

 private:
  void layout();

  std::vector<std::size_t> sizes_;
  std::vector<HeadSegment> head_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  Vec params_;
};

void apply_head(const std::vector<HeadSegment>& head, std::span<double> values);

/// Softmax cross-entropy for one example; writes d/d(logits).
double cross_entropy(std::span<const double> logits, std::size_t label, std::span<double> dlogits);

/// Composite reconstruction distance between a target row and a decoded row:
/// mean squared error over continuous slots plus (1 - cosine) per categorical block.
double reconstruction_distance(std::span<const double> target, std::span<const double> decoded,
                               const std::vector<BlockSpan>& layout);

/// Same distance evaluated from decoder logits; writes d/d(logits).
double reconstruction_loss(std::span<const double> target, std::span<const double> logits,
                           const std::vector<BlockSpan>& layout, std::span<double> dlogits);

class BlackBox final : public Classifier {
 public:
  BlackBox() = default;
  explicit BlackBox(Mlp mlp);

  Prediction predict(const EncodedVector& x) const override;
  std::size_t input_width() const override { return mlp_.input_width(); }
  std::size_t num_classes() const override { return mlp_.output_width(); }

  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }

  nlohmann::json to_json() const;
  static BlackBox from_json(const nlohmann::json& doc);

  bool operator==(const BlackBox& o) const { return mlp_ == o.mlp_; }

 private:
  Mlp mlp_;
};

class Autoencoder final : public LatentCodec {
 public:
  Autoencoder() = default;
  Autoencoder(Mlp encoder, Mlp decoder);

  LatentVector encode_latent(const EncodedVector& x) const override;
  EncodedVector decode_latent(const LatentVector& z) const override;
  std::size_t latent_dim() const override { return encoder_.output_width(); }
  std::size_t data_width() const override { return encoder_.input_width(); }

  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }
  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }

  nlohmann::json to_json() const;
  static Autoencoder from_json(const nlohmann::json& doc);

  bool operator==(const Autoencoder& o) const { return encoder_ == o.encoder_ && decoder_ == o.decoder_; }

 private:
  Mlp encoder_;
  Mlp decoder_;
};

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  std::uint64_t seed = 7;
  SplitFractions split;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc) { return from_json(doc, TrainConfig()); }
  static TrainConfig from_json(const nlohmann::json& doc, TrainConfig defaults);
};

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Deterministic shuffled split; every index lands in exactly one part.
DataSplit split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed);

/// Mean cross-entropy over `rows`; fills `grad` (parameter layout) when given.
double classifier_loss(const Mlp& mlp, const std::vector<EncodedVector>& x, const std::vector<std::size_t>& labels,
                       std::span<const std::size_t> rows, Vec* grad);

/// Mean reconstruction loss over `rows`; fills encoder/decoder gradients when given.
double autoencoder_loss(const Mlp& encoder, const Mlp& decoder, const std::vector<EncodedVector>& x,
                        const std::vector<BlockSpan>& layout, std::span<const std::size_t> rows, Vec* encoder_grad,
                        Vec* decoder_grad);

struct BlackBoxFit {
  BlackBox model;
  double val_accuracy = 0.0;
};

struct AutoencoderFit {
  Autoencoder model;
  double recon_loss = 0.0;
};

/// `arch` lists every layer width, input first and class count last.
BlackBoxFit train_blackbox(const std::vector<EncodedVector>& x, const std::vector<std::size_t>& labels,
                           const std::vector<std::size_t>& arch, const TrainConfig& cfg);

/// `encoder_arch` runs input width -> latent width; the decoder mirrors it.
AutoencoderFit train_autoencoder(const std::vector<EncodedVector>& x, const std::vector<BlockSpan>& layout,
                                 const std::vector<std::size_t>& encoder_arch, const TrainConfig& cfg);

}  // namespace recourse
