#pragma once

// Illumination correction transformer: resolution-preserving head with mini-patch
// flattening, transformer encoder and decoder, one-conv tail, and the
// reconstruction plus perceptual loss.

#include <cstdint>
#include <vector>

#include "doctr/geotr/transformer.hpp"
#include "doctr/illtr/patches.hpp"
#include "doctr/image.hpp"

namespace doctr {

struct IllConfig {
  int patch = 128;
  int mini = 4;
  int c_i = 16;
  int depth = 6;
  int heads = 8;
  int ffn_mult = 4;
  double overlap = 0.125;
  double alpha = 1e-5;
  bool use_encoder = true;
  bool use_decoder = true;
  DecoderResidual decoder_residual = DecoderResidual::Previous;

  int width() const { return c_i * mini * mini; }
  int tokens() const { return (patch / mini) * (patch / mini); }
  void validate() const;
};

/// H x W x C -> (H/P)(W/P) x (P P C); each row holds one P x P block in (dy, dx, c) order.
template <typename T>
Tensor<T> flatten_minipatches(const Tensor<T>& x, int p);
/// Inverse of flatten_minipatches.
template <typename T>
Tensor<T> unflatten_minipatches(const Tensor<T>& tokens, int height, int width, int channels, int p);

template <typename T>
class IllTr {
 public:
  IllTr(const IllConfig& cfg, std::uint64_t seed);

  /// patch x patch x 3 -> tokens x c_i P^2, without downsampling.
  Tensor<T> head(const Tensor<T>& patch) const;
  Tensor<T> encoder(const Tensor<T>& f) const;
  Tensor<T> decoder(const Tensor<T>& f_k) const;
  /// Tokens -> corrected patch in (0, 1).
  Tensor<T> tail(const Tensor<T>& f_d) const;
  Tensor<T> forward(const Tensor<T>& patch) const;

  const IllConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

 private:
  IllConfig cfg_;
  ParameterSet<T> params_;
  Conv<T> conv1_, conv2_, conv3_;
  Tensor<T> e_p_, e_d_;
  std::vector<EncoderLayer<T>> enc_;
  std::vector<DecoderLayer<T>> dec_;
  Conv<T> out_;
};

extern template class IllTr<float>;
extern template class IllTr<double>;

/// Fixed, seeded stand-in for the perceptual network: six 3x3 convs with ReLU,
/// channels 8, 8, 16, 16, 32, 32, the second of each pair with stride 2. Features
/// are tapped after convs 2, 4 and 6. Weights never receive gradients.
template <typename T>
class PerceptualExtractor {
 public:
  explicit PerceptualExtractor(std::uint64_t seed = 0x5eed);

  std::vector<Tensor<T>> features(const Tensor<T>& image) const;

 private:
  ParameterSet<T> params_;
  std::vector<Conv<T>> convs_;
};

extern template class PerceptualExtractor<float>;
extern template class PerceptualExtractor<double>;

/// mean|gt - pred| + alpha * sum over taps of mean|V(gt) - V(pred)|.
template <typename T>
Tensor<T> ill_loss(const Tensor<T>& pred, const Tensor<T>& gt, double alpha, const PerceptualExtractor<T>& v);

/// Corrects one patch at the configured extent.
Image correct_patch(const Image& patch, const IllTr<float>& model);
/// Crops overlapping patches, corrects them concurrently and stitches the results.
Image correct_illumination(const Image& image, const IllTr<float>& model);

}  // namespace doctr
