#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctr/numerics/tensor.hpp"

namespace doctr {

/// Interleaved H x W x C float image, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f);

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  float& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

  bool operator==(const Image&) const = default;
};

/// Bilinear resize with corner-aligned sampling grids.
Image resize_image(const Image& src, int height, int width);
/// Rec. 601 luma for 3-channel input; copies single-channel input.
Image to_gray(const Image& src);
/// Multiplies each pixel of `img` by the matching pixel of a single-channel `weight`.
Image multiply_pixels(const Image& img, const Image& weight);
float max_abs_diff(const Image& a, const Image& b);

template <typename T>
Tensor<T> image_to_tensor(const Image& img);
template <typename T>
Image tensor_to_image(const Tensor<T>& t);

/// Binary PGM (P5, one channel) or PPM (P6, three channels), 8 bits per sample.
/// Values are clamped to [0, 1] and rounded to the nearest level.
void write_pnm(const std::filesystem::path& path, const Image& img);
Image read_pnm(const std::filesystem::path& path);
/// Rounds every sample to the 8-bit grid, as a write/read round trip would.
Image quantize8(const Image& img);

}  // namespace doctr
