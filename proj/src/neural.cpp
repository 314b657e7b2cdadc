#include "recourse/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "recourse/error.hpp"

namespace recourse {
namespace {

constexpr int kModelVersion = 1;

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (double& x : v) x /= s;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "identity";
}

Activation activation_from(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softmax") return Activation::softmax;
  throw ParseError("unknown activation '" + s + "'");
}

double cosine_block_loss(std::span<const double> t, std::span<const double> p, std::span<double> dp) {
  const double tn = norm(t);
  const double pn = norm(p);
  if (tn == 0.0 || pn == 0.0) {
    for (double& g : dp) g = 0.0;
    return 1.0;
  }
  const double tp = dot(t, p);
  const double cosine = tp / (tn * pn);
  for (std::size_t j = 0; j < p.size(); ++j) dp[j] = -(t[j] / (tn * pn) - tp * p[j] / (tn * pn * pn * pn));
  return 1.0 - cosine;
}

void check_finite_loss(double loss, std::size_t epoch) {
  if (!std::isfinite(loss))
    throw TrainingError("loss diverged (non-finite) at epoch " + std::to_string(epoch) +
                        "; lower the learning rate");
}

}  // namespace

std::vector<HeadSegment> softmax_head(std::size_t width) { return {{0, width, Activation::softmax}}; }
std::vector<HeadSegment> identity_head(std::size_t width) { return {{0, width, Activation::identity}}; }

std::vector<HeadSegment> decoder_head(const std::vector<BlockSpan>& layout) {
  std::vector<HeadSegment> head;
  for (const auto& b : layout) head.push_back({b.offset, b.width, b.categorical ? Activation::softmax : Activation::sigmoid});
  return head;
}

void apply_head(const std::vector<HeadSegment>& head, std::span<double> values) {
  for (const auto& seg : head) {
    auto block = values.subspan(seg.offset, seg.width);
    switch (seg.activation) {
      case Activation::identity: break;
      case Activation::sigmoid:
        for (double& v : block) v = sigmoid(v);
        break;
      case Activation::softmax: softmax_inplace(block); break;
    }
  }
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes, std::vector<HeadSegment> head)
    : sizes_(std::move(layer_sizes)), head_(std::move(head)) {
  layout();
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes, std::vector<HeadSegment> head, Rng& rng)
    : Mlp(std::move(layer_sizes), std::move(head)) {
  for (std::size_t k = 0; k < num_layers(); ++k) {
    const double a = std::sqrt(6.0 / static_cast<double>(sizes_[k] + sizes_[k + 1]));
    for (double& w : weights(k)) w = rng.uniform(-a, a);
  }
}

void Mlp::layout() {
  if (sizes_.size() < 2) throw PreconditionError("an MLP needs at least an input and an output layer");
  for (std::size_t s : sizes_)
    if (s == 0) throw PreconditionError("MLP layer width must be positive");
  std::size_t covered = 0;
  for (const auto& seg : head_) {
    if (seg.offset != covered) throw PreconditionError("output head segments must tile the output layer");
    covered += seg.width;
  }
  if (covered != sizes_.back()) throw PreconditionError("output head does not cover the output layer");
  std::size_t off = 0;
  weight_offset_.clear();
  bias_offset_.clear();
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
    weight_offset_.push_back(off);
    off += sizes_[k] * sizes_[k + 1];
    bias_offset_.push_back(off);
    off += sizes_[k + 1];
  }
  params_.assign(off, 0.0);
}

std::span<double> Mlp::weights(std::size_t k) {
  return {params_.data() + weight_offset_.at(k), sizes_[k] * sizes_[k + 1]};
}
std::span<const double> Mlp::weights(std::size_t k) const {
  return {params_.data() + weight_offset_.at(k), sizes_[k] * sizes_[k + 1]};
}
std::span<double> Mlp::biases(std::size_t k) { return {params_.data() + bias_offset_.at(k), sizes_[k + 1]}; }
std::span<const double> Mlp::biases(std::size_t k) const {
  return {params_.data() + bias_offset_.at(k), sizes_[k + 1]};
}

Vec Mlp::logits(std::span<const double> x, Trace* trace) const {
  if (x.size() != input_width())
    throw PreconditionError("MLP input has width " + std::to_string(x.size()) + ", expected " +
                            std::to_string(input_width()));
  Vec h(x.begin(), x.end());
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  for (std::size_t k = 0; k < num_layers(); ++k) {
    const std::size_t in = sizes_[k];
    const std::size_t out = sizes_[k + 1];
    const auto w = weights(k);
    const auto b = biases(k);
    Vec a(out);
    for (std::size_t r = 0; r < out; ++r) a[r] = b[r] + dot(w.subspan(r * in, in), h);
    if (trace) {
      trace->inputs.push_back(std::move(h));
      trace->pre.push_back(a);
    }
    if (k + 1 < num_layers())
      for (double& v : a) v = std::max(0.0, v);
    h = std::move(a);
  }
  return h;
}

Vec Mlp::forward(std::span<const double> x) const {
  Vec out = logits(x);
  apply_head(head_, out);
  return out;
}

void Mlp::backward(const Trace& trace, std::span<const double> dlogits, std::span<double> grad, Vec* dinput) const {
  Vec delta(dlogits.begin(), dlogits.end());
  for (std::size_t k = num_layers(); k-- > 0;) {
    const std::size_t in = sizes_[k];
    const std::size_t out = sizes_[k + 1];
    const auto w = weights(k);
    const Vec& h = trace.inputs[k];
    auto gw = grad.subspan(weight_offset_[k], in * out);
    auto gb = grad.subspan(bias_offset_[k], out);
    for (std::size_t r = 0; r < out; ++r) {
      gb[r] += delta[r];
      axpy(delta[r], h, gw.subspan(r * in, in));
    }
    if (k == 0 && !dinput) break;
    Vec prev(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) axpy(delta[r], w.subspan(r * in, in), prev);
    if (k > 0) {
      const Vec& pre = trace.pre[k - 1];
      for (std::size_t i = 0; i < in; ++i)
        if (pre[i] <= 0.0) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
  if (dinput) *dinput = std::move(delta);
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json head = nlohmann::json::array();
  for (const auto& seg : head_)
    head.push_back({{"offset", seg.offset}, {"width", seg.width}, {"activation", activation_name(seg.activation)}});
  return {{"layer_sizes", sizes_}, {"hidden_activation", "relu"}, {"head", std::move(head)}, {"parameters", params_}};
}

Mlp Mlp::from_json(const nlohmann::json& doc) {
  try {
    std::vector<HeadSegment> head;
    for (const auto& j : doc.at("head"))
      head.push_back({j.at("offset").get<std::size_t>(), j.at("width").get<std::size_t>(),
                      activation_from(j.at("activation").get<std::string>())});
    Mlp mlp(doc.at("layer_sizes").get<std::vector<std::size_t>>(), std::move(head));
    auto params = doc.at("parameters").get<Vec>();
    if (params.size() != mlp.params_.size()) throw ParseError("MLP parameter count does not match its layer sizes");
    if (!all_finite(params)) throw ParseError("MLP parameters must be finite");
    mlp.params_ = std::move(params);
    return mlp;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed MLP document: ") + e.what());
  }
}

double cross_entropy(std::span<const double> logits, std::size_t label, std::span<double> dlogits) {
  Vec p(logits.begin(), logits.end());
  softmax_inplace(p);
  for (std::size_t i = 0; i < p.size(); ++i) dlogits[i] = p[i] - (i == label ? 1.0 : 0.0);
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  return m + std::log(s) - logits[label];
}

double reconstruction_distance(std::span<const double> target, std::span<const double> decoded,
                               const std::vector<BlockSpan>& layout) {
  std::size_t n_cont = 0;
  for (const auto& b : layout)
    if (!b.categorical) ++n_cont;
  double loss = 0.0;
  for (const auto& b : layout) {
    if (b.categorical) {
      Vec scratch(b.width);
      loss += cosine_block_loss(target.subspan(b.offset, b.width), decoded.subspan(b.offset, b.width), scratch);
    } else {
      const double d = target[b.offset] - decoded[b.offset];
      loss += d * d / static_cast<double>(n_cont);
    }
  }
  return loss;
}

double reconstruction_loss(std::span<const double> target, std::span<const double> logits,
                           const std::vector<BlockSpan>& layout, std::span<double> dlogits) {
  std::size_t n_cont = 0;
  for (const auto& b : layout)
    if (!b.categorical) ++n_cont;
  double loss = 0.0;
  for (const auto& b : layout) {
    if (b.categorical) {
      Vec p(logits.begin() + b.offset, logits.begin() + b.offset + b.width);
      softmax_inplace(p);
      Vec dp(b.width);
      loss += cosine_block_loss(target.subspan(b.offset, b.width), p, dp);
      const double gp = dot(dp, p);
      for (std::size_t j = 0; j < b.width; ++j) dlogits[b.offset + j] = p[j] * (dp[j] - gp);
    } else {
      const double y = sigmoid(logits[b.offset]);
      const double d = y - target[b.offset];
      loss += d * d / static_cast<double>(n_cont);
      dlogits[b.offset] = 2.0 * d / static_cast<double>(n_cont) * y * (1.0 - y);
    }
  }
  return loss;
}

BlackBox::BlackBox(Mlp mlp) : mlp_(std::move(mlp)) {
  if (mlp_.head() != softmax_head(mlp_.output_width())) throw PreconditionError("black box needs a softmax head");
}

Prediction BlackBox::predict(const EncodedVector& x) const {
  if (x.size() != input_width())
    throw PreconditionError("black box expects width " + std::to_string(input_width()) + ", got " +
                            std::to_string(x.size()));
  Prediction p;
  p.probs = mlp_.forward(x.data);
  p.label = argmax(p.probs);
  return p;
}

nlohmann::json BlackBox::to_json() const {
  return {{"version", kModelVersion}, {"kind", "blackbox"}, {"mlp", mlp_.to_json()}};
}

BlackBox BlackBox::from_json(const nlohmann::json& doc) {
  if (doc.value("kind", "") != "blackbox") throw ParseError("document is not a black-box model");
  if (doc.value("version", 0) != kModelVersion) throw ParseError("unsupported model version");
  return BlackBox(Mlp::from_json(doc.at("mlp")));
}

Autoencoder::Autoencoder(Mlp encoder, Mlp decoder) : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  if (encoder_.output_width() != decoder_.input_width())
    throw PreconditionError("encoder output width must equal decoder input width");
  if (decoder_.output_width() != encoder_.input_width())
    throw PreconditionError("decoder output width must equal encoder input width");
}

LatentVector Autoencoder::encode_latent(const EncodedVector& x) const {
  if (x.size() != data_width())
    throw PreconditionError("encoder expects width " + std::to_string(data_width()) + ", got " +
                            std::to_string(x.size()));
  return {encoder_.forward(x.data)};
}

EncodedVector Autoencoder::decode_latent(const LatentVector& z) const {
  if (z.size() != latent_dim())
    throw PreconditionError("decoder expects latent width " + std::to_string(latent_dim()) + ", got " +
                            std::to_string(z.size()));
  return {decoder_.forward(z.z)};
}

nlohmann::json Autoencoder::to_json() const {
  return {{"version", kModelVersion},
          {"kind", "autoencoder"},
          {"latent_dim", latent_dim()},
          {"encoder", encoder_.to_json()},
          {"decoder", decoder_.to_json()}};
}

Autoencoder Autoencoder::from_json(const nlohmann::json& doc) {
  if (doc.value("kind", "") != "autoencoder") throw ParseError("document is not an autoencoder model");
  if (doc.value("version", 0) != kModelVersion) throw ParseError("unsupported model version");
  return Autoencoder(Mlp::from_json(doc.at("encoder")), Mlp::from_json(doc.at("decoder")));
}

void TrainConfig::validate() const {
  if (epochs == 0) throw PreconditionError("epochs must be positive");
  if (batch_size == 0) throw PreconditionError("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw PreconditionError("learning_rate must be > 0");
  const double total = split.train + split.val + split.test;
  if (split.train <= 0.0 || split.val < 0.0 || split.test < 0.0 || std::abs(total - 1.0) > 1e-9)
    throw PreconditionError("split fractions must be non-negative and sum to 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"split", {split.train, split.val, split.test}}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc, TrainConfig cfg) {
  try {
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("split")) {
      auto s = doc["split"].get<std::vector<double>>();
      if (s.size() != 3) throw ParseError("split needs three fractions", "split");
      cfg.split = {s[0], s[1], s[2]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed training config: ") + e.what());
  }
  return cfg;
}

DataSplit split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed ^ 0x5eed5a1175ULL);
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n)));
  DataSplit out;
  const std::size_t a = std::min(n, std::max<std::size_t>(n_train, n ? 1 : 0));
  const std::size_t b = std::min(n, a + n_val);
  out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a));
  out.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(a), idx.begin() + static_cast<std::ptrdiff_t>(b));
  out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end());
  return out;
}

double classifier_loss(const Mlp& mlp, const std::vector<EncodedVector>& x, const std::vector<std::size_t>& labels,
                       std::span<const std::size_t> rows, Vec* grad) {
  if (grad) grad->assign(mlp.parameters().size(), 0.0);
  Mlp::Trace trace;
  Vec dlogits(mlp.output_width());
  double total = 0.0;
  for (std::size_t r : rows) {
    const Vec logits = mlp.logits(x[r].data, grad ? &trace : nullptr);
    total += cross_entropy(logits, labels[r], dlogits);
    if (grad) mlp.backward(trace, dlogits, *grad);
  }
  const double scale = 1.0 / static_cast<double>(rows.size());
  if (grad)
    for (double& g : *grad) g *= scale;
  return total * scale;
}

double autoencoder_loss(const Mlp& encoder, const Mlp& decoder, const std::vector<EncodedVector>& x,
                        const std::vector<BlockSpan>& layout, std::span<const std::size_t> rows, Vec* encoder_grad,
                        Vec* decoder_grad) {
  if (encoder.head() != identity_head(encoder.output_width()))
    throw PreconditionError("encoder must have an identity output head");
  const bool want_grad = encoder_grad || decoder_grad;
  Vec genc_local;
  Vec gdec_local;
  Vec& genc = encoder_grad ? *encoder_grad : genc_local;
  Vec& gdec = decoder_grad ? *decoder_grad : gdec_local;
  if (want_grad) {
    genc.assign(encoder.parameters().size(), 0.0);
    gdec.assign(decoder.parameters().size(), 0.0);
  }
  Mlp::Trace etrace;
  Mlp::Trace dtrace;
  Vec dlogits(decoder.output_width());
  Vec dz;
  double total = 0.0;
  for (std::size_t r : rows) {
    const Vec z = encoder.logits(x[r].data, want_grad ? &etrace : nullptr);
    const Vec logits = decoder.logits(z, want_grad ? &dtrace : nullptr);
    total += reconstruction_loss(x[r].data, logits, layout, dlogits);
    if (want_grad) {
      decoder.backward(dtrace, dlogits, gdec, &dz);
      encoder.backward(etrace, dz, genc);
    }
  }
  const double scale = 1.0 / static_cast<double>(rows.size());
  if (want_grad) {
    for (double& g : genc) g *= scale;
    for (double& g : gdec) g *= scale;
  }
  return total * scale;
}

namespace {

template <class StepFn>
void run_epochs(const TrainConfig& cfg, std::vector<std::size_t> order, Rng& rng, StepFn&& step) {
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const double loss = step(std::span<const std::size_t>(order.data() + start, len));
      check_finite_loss(loss, epoch);
    }
  }
}

}  // namespace

BlackBoxFit train_blackbox(const std::vector<EncodedVector>& x, const std::vector<std::size_t>& labels,
                           const std::vector<std::size_t>& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (x.empty() || x.size() != labels.size()) throw PreconditionError("need one label per training row");
  if (arch.size() < 2) throw PreconditionError("architecture needs input and output widths");
  if (arch.front() != x.front().size())
    throw PreconditionError("architecture input width " + std::to_string(arch.front()) + " does not match data width " +
                            std::to_string(x.front().size()));
  const std::set<std::size_t> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw TrainingError("fewer than 2 classes in training data");
  if (*classes.rbegin() >= arch.back())
    throw PreconditionError("label index exceeds architecture output width " + std::to_string(arch.back()));
  for (const auto& row : x)
    if (row.size() != arch.front()) throw PreconditionError("ragged training rows");

  const DataSplit split = split_indices(x.size(), cfg.split, cfg.seed);
  Rng rng(cfg.seed);
  Mlp mlp(arch, softmax_head(arch.back()), rng);
  Vec grad;
  run_epochs(cfg, split.train, rng, [&](std::span<const std::size_t> batch) {
    const double loss = classifier_loss(mlp, x, labels, batch, &grad);
    if (std::isfinite(loss)) axpy(-cfg.learning_rate, grad, mlp.parameters());
    if (!all_finite(mlp.parameters())) return std::numeric_limits<double>::quiet_NaN();
    return loss;
  });

  BlackBoxFit fit{BlackBox(std::move(mlp)), 0.0};
  const auto& held_out = split.val.empty() ? split.train : split.val;
  std::size_t correct = 0;
  for (std::size_t r : held_out)
    if (fit.model.predict(x[r]).label == labels[r]) ++correct;
  fit.val_accuracy = static_cast<double>(correct) / static_cast<double>(held_out.size());
  return fit;
}

AutoencoderFit train_autoencoder(const std::vector<EncodedVector>& x, const std::vector<BlockSpan>& layout,
                                 const std::vector<std::size_t>& encoder_arch, const TrainConfig& cfg) {
  cfg.validate();
  if (x.empty()) throw PreconditionError("no training rows");
  if (encoder_arch.size() < 2) throw PreconditionError("encoder architecture needs input and latent widths");
  if (encoder_arch.front() != x.front().size())
    throw PreconditionError("encoder input width " + std::to_string(encoder_arch.front()) +
                            " does not match data width " + std::to_string(x.front().size()));
  std::size_t covered = 0;
  for (const auto& b : layout) covered += b.width;
  if (covered != encoder_arch.front()) throw PreconditionError("block layout does not cover the data width");

  std::vector<std::size_t> decoder_arch(encoder_arch.rbegin(), encoder_arch.rend());
  const DataSplit split = split_indices(x.size(), cfg.split, cfg.seed);
  Rng rng(cfg.seed);
  Mlp encoder(encoder_arch, identity_head(encoder_arch.back()), rng);
  Mlp decoder(decoder_arch, decoder_head(layout), rng);
  Vec genc;
  Vec gdec;
  run_epochs(cfg, split.train, rng, [&](std::span<const std::size_t> batch) {
    const double loss = autoencoder_loss(encoder, decoder, x, layout, batch, &genc, &gdec);
    if (std::isfinite(loss)) {
      axpy(-cfg.learning_rate, genc, encoder.parameters());
      axpy(-cfg.learning_rate, gdec, decoder.parameters());
    }
    if (!all_finite(encoder.parameters()) || !all_finite(decoder.parameters()))
      return std::numeric_limits<double>::quiet_NaN();
    return loss;
  });

  const auto& held_out = split.val.empty() ? split.train : split.val;
  const double val_loss = autoencoder_loss(encoder, decoder, x, layout, held_out, nullptr, nullptr);
  return {Autoencoder(std::move(encoder), std::move(decoder)), val_loss};
}

}  // namespace recourse
