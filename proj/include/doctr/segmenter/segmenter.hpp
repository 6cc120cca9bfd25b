#pragma once

// Foreground document segmentation: confidence map, thresholding and background
// removal ahead of the unwarping network.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "doctr/image.hpp"
#include "doctr/numerics/nn.hpp"

namespace doctr {

struct SegConfig {
  int input_size = 288;
  int c0 = 16;
  int c1 = 32;
  int c2 = 64;
  double tau = 0.5;
  Reduction reduction = Reduction::Sum;

  void validate() const;
};

struct ConfidenceMap {
  int height = 0;
  int width = 0;
  std::vector<float> p;
};

struct DocMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> m;  // 0 or 1

  double area_fraction() const;
  bool operator==(const DocMask&) const = default;
};

/// Small U-shaped network: two full-resolution convs, two stride-2 stages, nearest
/// upsampling with skip concatenation, and a 1x1 sigmoid head.
template <typename T>
class Segmenter {
 public:
  Segmenter(const SegConfig& cfg, std::uint64_t seed, const std::string& prefix = "seg");

  /// image: H0 x W0 x 3 -> H0 x W0 x 1 probabilities.
  Tensor<T> forward(const Tensor<T>& image) const;

  const SegConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

 private:
  SegConfig cfg_;
  ParameterSet<T> params_;
  Conv<T> e0a_, e0b_, e1a_, e1b_, e2a_, e2b_, u1_, u0_, out_;
};

extern template class Segmenter<float>;
extern template class Segmenter<double>;

/// Runs the network on an image already at the configured input size.
ConfidenceMap segment(const Image& image, const Segmenter<float>& model);

/// 1 where p >= tau.
DocMask binarize(const ConfidenceMap& conf, double tau);
/// Multiplies every channel by the mask.
Image remove_background(const Image& image, const DocMask& mask);
/// Binary cross-entropy of a confidence map against a mask, predictions clamped to [eps, 1 - eps].
double bce(const ConfidenceMap& pred, const DocMask& gt, Reduction reduction = Reduction::Sum, double eps = 1e-7);

ConfidenceMap mask_as_confidence(const DocMask& mask);
Tensor<float> mask_to_tensor(const DocMask& mask);
/// Nearest-neighbour resize, for moving masks between resolutions.
DocMask resize_mask(const DocMask& mask, int height, int width);

/// 8-bit P5 graymap: 255 for foreground, 0 for background. Reading thresholds at 128.
void write_mask_pgm(const std::filesystem::path& path, const DocMask& mask);
DocMask read_mask_pgm(const std::filesystem::path& path);

}  // namespace doctr
