#pragma once

// Overlapping patch crops and feathered stitching.

#include <vector>

#include "doctr/image.hpp"

namespace doctr {

struct PatchRect {
  int y = 0;
  int x = 0;
};

struct PatchLayout {
  int height = 0;  // source extent
  int width = 0;
  int canvas_height = 0;  // source extent after edge padding up to one patch
  int canvas_width = 0;
  int patch = 0;
  int stride = 0;
  std::vector<int> rows;  // patch origins along y
  std::vector<int> cols;  // patch origins along x
  std::vector<PatchRect> rects;  // row-major over rows x cols
};

/// Origins 0, stride, 2 stride, ... with the last one clamped so the patch ends at the border.
std::vector<int> patch_origins(int extent, int patch, int stride);

/// stride = patch - round(overlap * patch). Inputs smaller than a patch are padded
/// by edge replication first.
PatchLayout make_layout(int height, int width, int patch, double overlap);

std::vector<Image> crop_patches(const Image& image, const PatchLayout& layout);

/// Per-patch blend weights (patch x patch, one channel). Each patch's raw weight ramps
/// linearly towards 0 at edges that lie inside the canvas; the weights are then
/// normalized so they sum to 1 at every pixel.
std::vector<Image> blend_weights(const PatchLayout& layout);

/// Feathered blend of the patches back to the source extent.
Image stitch(const std::vector<Image>& patches, const PatchLayout& layout);

}  // namespace doctr
