#include "doctr/illtr/patches.hpp"

#include <algorithm>
#include <cmath>

#include "doctr/numerics/errors.hpp"

namespace doctr {

std::vector<int> patch_origins(int extent, int patch, int stride) {
  if (patch < 1 || stride < 1) throw ArgumentError("patch_origins: patch and stride must be positive");
  if (extent < patch) throw ArgumentError("patch_origins: extent smaller than a patch");
  std::vector<int> o{0};
  while (o.back() + patch < extent) o.push_back(std::min(o.back() + stride, extent - patch));
  return o;
}

PatchLayout make_layout(int height, int width, int patch, double overlap) {
  if (height < 1 || width < 1) throw ArgumentError("make_layout: extents must be positive");
  if (!(overlap >= 0.0 && overlap < 0.5)) throw ArgumentError("make_layout: overlap must lie in [0, 0.5)");
  PatchLayout l;
  l.height = height;
  l.width = width;
  l.canvas_height = std::max(height, patch);
  l.canvas_width = std::max(width, patch);
  l.patch = patch;
  l.stride = patch - static_cast<int>(std::lround(overlap * patch));
  l.rows = patch_origins(l.canvas_height, patch, l.stride);
  l.cols = patch_origins(l.canvas_width, patch, l.stride);
  for (int y : l.rows)
    for (int x : l.cols) l.rects.push_back({y, x});
  return l;
}

std::vector<Image> crop_patches(const Image& image, const PatchLayout& layout) {
  if (image.height != layout.height || image.width != layout.width)
    throw DimensionError("crop_patches: image extent does not match the layout");
  std::vector<Image> out;
  out.reserve(layout.rects.size());
  for (const auto& r : layout.rects) {
    Image p(layout.patch, layout.patch, image.channels);
    for (int y = 0; y < layout.patch; ++y)
      for (int x = 0; x < layout.patch; ++x) {
        const int sy = std::min(r.y + y, image.height - 1), sx = std::min(r.x + x, image.width - 1);
        for (int c = 0; c < image.channels; ++c) p.at(y, x, c) = image.at(sy, sx, c);
      }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

// Raw ramp along one axis for the patch at position k of `origins`.
std::vector<double> axis_ramp(const std::vector<int>& origins, std::size_t k, int patch) {
  const int o = origins[k];
  const int before = k > 0 ? origins[k - 1] + patch - o : 0;
  const int after = k + 1 < origins.size() ? o + patch - origins[k + 1] : 0;
  std::vector<double> r(static_cast<std::size_t>(patch), 1.0);
  for (int l = 0; l < patch; ++l) {
    double w = 1.0;
    if (before > 0) w = std::min(w, (l + 0.5) / before);
    if (after > 0) w = std::min(w, (patch - l - 0.5) / after);
    r[static_cast<std::size_t>(l)] = w;
  }
  return r;
}

}  // namespace

std::vector<Image> blend_weights(const PatchLayout& layout) {
  const int p = layout.patch;
  std::vector<Image> raw;
  std::vector<double> total(static_cast<std::size_t>(layout.canvas_height) * layout.canvas_width, 0.0);
  for (std::size_t i = 0; i < layout.rows.size(); ++i)
    for (std::size_t j = 0; j < layout.cols.size(); ++j) {
      const auto ry = axis_ramp(layout.rows, i, p), rx = axis_ramp(layout.cols, j, p);
      Image w(p, p, 1);
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) {
          const double v = ry[static_cast<std::size_t>(y)] * rx[static_cast<std::size_t>(x)];
          w.at(y, x) = static_cast<float>(v);
          total[static_cast<std::size_t>(layout.rows[i] + y) * layout.canvas_width + layout.cols[j] + x] += static_cast<float>(v);
        }
      raw.push_back(std::move(w));
    }
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto& r = layout.rects[k];
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x)
        raw[k].at(y, x) = static_cast<float>(raw[k].at(y, x) / total[static_cast<std::size_t>(r.y + y) * layout.canvas_width + r.x + x]);
  }
  return raw;
}

Image stitch(const std::vector<Image>& patches, const PatchLayout& layout) {
  if (patches.size() != layout.rects.size()) throw ArgumentError("stitch: patch count does not match the layout");
  if (patches.empty()) throw ArgumentError("stitch: no patches");
  const int ch = patches[0].channels;
  for (const auto& p : patches)
    if (p.height != layout.patch || p.width != layout.patch || p.channels != ch)
      throw DimensionError("stitch: patch extent does not match the layout");
  const auto weights = blend_weights(layout);
  std::vector<double> acc(static_cast<std::size_t>(layout.height) * layout.width * ch, 0.0);
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const auto& r = layout.rects[k];
    for (int y = 0; y < layout.patch && r.y + y < layout.height; ++y)
      for (int x = 0; x < layout.patch && r.x + x < layout.width; ++x) {
        const double w = weights[k].at(y, x);
        const std::size_t base = (static_cast<std::size_t>(r.y + y) * layout.width + r.x + x) * ch;
        for (int c = 0; c < ch; ++c) acc[base + c] += w * patches[k].at(y, x, c);
      }
  }
  Image out(layout.height, layout.width, ch);
  for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i]);
  return out;
}

}  // namespace doctr
