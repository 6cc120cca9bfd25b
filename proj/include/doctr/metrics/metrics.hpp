#pragma once

// Evaluation suite: local distortion over a dense correspondence, SSIM and
// MS-SSIM, edit distance and character error rate.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "doctr/image.hpp"

namespace doctr {

/// Per-pixel displacement (dx, dy) in pixels from a reference to a target image.
struct DenseFlow {
  int height = 0;
  int width = 0;
  std::vector<float> dx;
  std::vector<float> dy;

  DenseFlow() = default;
  DenseFlow(int h, int w);
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Coarse-to-fine block matcher settings.
struct FlowParams {
  int block = 8;
  int radius = 4;
  double smoothness = 0.5;
  int levels = 3;
  int smoothing_sweeps = 8;
};

/// Dense correspondence by coarse-to-fine block matching. Each pixel takes the
/// integer displacement minimizing the sum of absolute differences over the
/// block around it plus `smoothness` times the L1 disagreement with its four
/// neighbours. Every level starts from the flow carried over from the coarser
/// level and refines it by iterated conditional modes, so textureless regions
/// keep the carried flow.
/// Inputs must share extents; colour inputs are converted to luma.
DenseFlow dense_flow(const Image& ref, const Image& target, const FlowParams& params = {});

/// Mean per-pixel Euclidean length of the flow.
double local_distortion(const DenseFlow& flow);

struct MsSsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::array<double, 5> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

  void validate() const;
};

/// Mean SSIM over all fully contained Gaussian windows, dynamic range 1.
double ssim(const Image& a, const Image& b, const MsSsimParams& params = {});

/// Multi-scale SSIM: product of per-level contrast-structure terms raised to the
/// level weights, with luminance included at the coarsest level. Levels whose
/// extent would fall below the window are dropped and the remaining weights are
/// renormalized. Negative per-level terms are clamped to zero.
double ms_ssim(const Image& a, const Image& b, const MsSsimParams& params = {});

/// Number of levels ms_ssim uses for the given extent.
int ms_ssim_levels(int height, int width, const MsSsimParams& params = {});

/// Levenshtein distance with unit costs, over bytes.
std::size_t edit_distance(const std::string& hyp, const std::string& ref);

/// edit_distance(hyp, ref) / |ref|.
double cer(const std::string& hyp, const std::string& ref);

}  // namespace doctr
