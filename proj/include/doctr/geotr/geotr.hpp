#pragma once

// Geometric unwarping transformer: convolutional head, transformer encoder and
// decoder, and a tail that upsamples a coarse displacement field to a backward map.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "doctr/fields/backward_map.hpp"
#include "doctr/geotr/transformer.hpp"
#include "doctr/segmenter/segmenter.hpp"

namespace doctr {

struct GeoConfig {
  int input_size = 288;
  int c_g = 512;
  int depth = 6;
  int heads = 8;
  int ffn_mult = 4;
  std::array<int, 3> head_channels{64, 128, 256};
  int tail_channels = 256;
  bool use_encoder = true;
  bool use_decoder = true;
  bool learned_upsample = true;
  DecoderResidual decoder_residual = DecoderResidual::Previous;

  int grid() const { return input_size / 8; }
  int tokens() const { return grid() * grid(); }
  void validate() const;
};

/// conv-IN-ReLU, conv-IN, optional 1x1 projection of the skip, then ReLU of the sum.
template <typename T>
struct ResidualBlock {
  Conv<T> conv1, conv2;
  std::optional<Conv<T>> skip;

  static ResidualBlock create(ParameterSet<T>& ps, const std::string& name, std::int64_t cin, std::int64_t cout,
                              int stride, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
class GeoTr {
 public:
  GeoTr(const GeoConfig& cfg, std::uint64_t seed);

  /// H0 x W0 x 3 background-excluded image -> N_g x c_g tokens.
  Tensor<T> head(const Tensor<T>& image) const;
  /// Encoder, or f_s + E_p when the encoder is disabled.
  Tensor<T> encoder(const Tensor<T>& f_s) const;
  /// Decoder, or F_K itself when the decoder is disabled.
  Tensor<T> decoder(const Tensor<T>& f_k) const;
  /// Coarse displacement (H0/8 x W0/8 x 2) and normalized upsampling mask (H0/8 x W0/8 x 9 x 64).
  std::pair<Tensor<T>, Tensor<T>> tail_fields(const Tensor<T>& f_d) const;
  /// N_g x c_g decoded tokens -> H0 x W0 x 2 backward map in normalized coordinates.
  Tensor<T> tail(const Tensor<T>& f_d) const;
  Tensor<T> forward(const Tensor<T>& image) const;

  const GeoConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const Tensor<T>& position_embedding() const { return e_p_; }
  const Tensor<T>& query_embedding() const { return e_d_; }

 private:
  GeoConfig cfg_;
  ParameterSet<T> params_;
  Conv<T> stem_;
  std::vector<ResidualBlock<T>> blocks_;
  Conv<T> proj_;
  Tensor<T> e_p_, e_d_;
  std::vector<EncoderLayer<T>> enc_;
  std::vector<DecoderLayer<T>> dec_;
  Conv<T> flow1_, flow2_, mask1_, mask2_;
  Tensor<T> grid_;
};

extern template class GeoTr<float>;
extern template class GeoTr<double>;

/// Mean absolute difference over both coordinate planes.
template <typename T>
Tensor<T> geo_loss(const Tensor<T>& pred, const Tensor<T>& gt);
double geo_loss(const BackwardMap& pred, const BackwardMap& gt);

/// Predicts f_b for an image already at the network input size.
BackwardMap predict_map(const Image& input, const GeoTr<float>& geo);

/// Resizes f_b to the extent of `image` and samples it with bilinear lookup.
Image apply_map(const Image& image, const BackwardMap& f_b, BackwardMap* f_B = nullptr);

struct UnwarpResult {
  Image rectified;
  BackwardMap map;  // f_B at the input resolution
  DocMask mask;     // at the network input size; all ones without a segmenter
};

/// Downsample, segment, threshold, remove background, predict f_b, upsample it to
/// the input extent and warp the input. A null segmenter skips preprocessing.
/// Throws PipelineError when the document mask covers less than 1% of the frame.
UnwarpResult unwarp(const Image& image, const Segmenter<float>* seg, const GeoTr<float>& geo, double tau = 0.5);
/// As unwarp, with a caller-supplied mask at the network input size.
UnwarpResult unwarp_masked(const Image& image, const DocMask& mask, const GeoTr<float>& geo);

}  // namespace doctr
