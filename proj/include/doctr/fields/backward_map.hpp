#pragma once

// Backward mapping fields and the warps built on them.
//
// A BackwardMap stores, for every output pixel, the location in the source image
// to sample from. Coordinates are normalized: u = 0 is the left source column and
// u = 1 the right one (likewise v for rows), so a map keeps its meaning when it
// is resized. Values outside [0, 1] are legal and clamp at sampling time.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "doctr/image.hpp"
#include "doctr/numerics/tensor.hpp"

namespace doctr {

struct BackwardMap {
  int height = 0;
  int width = 0;
  std::vector<float> u;  // row-major, height * width
  std::vector<float> v;

  BackwardMap() = default;
  BackwardMap(int h, int w);

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  bool operator==(const BackwardMap&) const = default;
};

/// u(x, y) = x / (W - 1), v(x, y) = y / (H - 1); a unit extent maps to 0.
BackwardMap identity_map(int height, int width);

/// 4-neighbour bilinear sample at pixel coordinates (x, y), clamped to the image
/// rectangle; exact at integer coordinates. Writes `src.channels` values.
void bilinear_sample(const Image& src, double x, double y, std::span<float> out);

/// out(p) = src(map.u(p) * (W - 1), map.v(p) * (H - 1)).
Image warp_image(const Image& src, const BackwardMap& map);

/// Bilinear, corner-aligned resize of both coordinate planes. Normalized values
/// need no rescaling.
BackwardMap resize_map(const BackwardMap& map, int height, int width);

/// Mean absolute difference over both planes.
double map_l1(const BackwardMap& a, const BackwardMap& b);

/// H x W x 2 tensor with channels (u, v).
template <typename T>
Tensor<T> map_to_tensor(const BackwardMap& map);
template <typename T>
BackwardMap map_from_tensor(const Tensor<T>& t);

/// BMAP file: "BMAP", u32 LE height, u32 LE width, u8 flag (1 = normalized),
/// then per pixel in row-major order the f32 LE pair (u, v).
void write_bmap(std::ostream& out, const BackwardMap& map);
BackwardMap read_bmap(std::istream& in);
void write_bmap(const std::filesystem::path& path, const BackwardMap& map);
BackwardMap read_bmap(const std::filesystem::path& path);

namespace detail {

/// Sampling taps for one coordinate: neighbours x0 <= x1 and weight of x1.
/// Coordinates within a rounding tolerance of an integer snap to it so that
/// normalized identity maps reproduce the source exactly.
struct AxisTap {
  int i0 = 0;
  int i1 = 0;
  double frac = 0.0;
  bool clamped = false;  // coordinate was outside [0, extent - 1]
};
AxisTap axis_tap(double pos, int extent);

}  // namespace detail

}  // namespace doctr
