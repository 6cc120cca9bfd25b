#pragma once

// Differentiable resampling operators used by the unwarping model and its loss.

#include "doctr/numerics/tensor.hpp"

namespace doctr {

/// Bilinear sampling of src[H x W x C] at the normalized coordinates of
/// map[H' x W' x 2]; gradients flow to both the source values and the map.
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& src, const Tensor<T>& map);

/// Corner-aligned bilinear resize of an h x w x C field to H x W x C.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int height, int width);

/// Learned convex upsampling. `coarse` is h x w x C; `mask` is h x w x 9 x f^2,
/// already normalized over its third axis. Output pixel (f i + sy, f j + sx) is
///   sum_{a,b in 0..2} mask[i, j, 3a + b, f sy + sx] * coarse[i - (a - 1), j - (b - 1)]
/// with zeros outside the coarse grid. Throws ContractError when a weight is
/// negative or a 3 x 3 weight set does not sum to 1 within 1e-4.
template <typename T>
Tensor<T> convex_upsample(const Tensor<T>& coarse, const Tensor<T>& mask, int factor = 8);

/// H x W x 2 tensor holding the identity backward map.
template <typename T>
Tensor<T> identity_grid(int height, int width);

}  // namespace doctr
