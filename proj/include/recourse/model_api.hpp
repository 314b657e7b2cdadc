#pragma once

#include <cstddef>

#include "recourse/linalg.hpp"
#include "recourse/tabular.hpp"

namespace recourse {

struct LatentVector {
  Vec z;

  std::size_t size() const { return z.size(); }
  bool operator==(const LatentVector&) const = default;
};

struct Prediction {
  std::size_t label = 0;
  Vec probs;
};

/// The black box F(x). The engine only ever queries it; any classifier over
/// encoded vectors can be plugged in behind this interface.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Prediction predict(const EncodedVector& x) const = 0;
  virtual std::size_t input_width() const = 0;
  virtual std::size_t num_classes() const = 0;
};

/// Encoder/decoder pair defining the latent space searched by the explainers.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual LatentVector encode_latent(const EncodedVector& x) const = 0;
  virtual EncodedVector decode_latent(const LatentVector& z) const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t data_width() const = 0;
};

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace recourse
