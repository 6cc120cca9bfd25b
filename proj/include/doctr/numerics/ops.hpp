#pragma once

#include <cstdint>
#include <vector>

#include "doctr/numerics/tensor.hpp"

namespace doctr {

// ---- elementwise -------------------------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
/// Adds `bias` (shape [C]) along the last axis of `x` (shape [..., C]).
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
/// Multiplies each position of `x` ([..., C]) by `w` ([...]); used for masking.
template <typename T> Tensor<T> mul_broadcast_last(const Tensor<T>& x, const Tensor<T>& w);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T s);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// Smooth approximation of clamp(x, 0, 1): (softplus(b x) - softplus(b (x - 1))) / b.
/// Strictly inside (0, 1) with slope close to 1 in the middle of the range.
template <typename T> Tensor<T> smooth_clamp01(const Tensor<T>& x, T sharpness = T(16));
template <typename T> Tensor<T> abs(const Tensor<T>& x);

// ---- reductions --------------------------------------------------------------

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// mean(|a - b|)
template <typename T> Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);

enum class Reduction { Sum, Mean };

/// Binary cross-entropy with predictions clamped to [eps, 1 - eps].
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target, Reduction reduction = Reduction::Sum,
                   T eps = T(1e-7));

// ---- linear algebra ----------------------------------------------------------

/// a[m x k] * b[k x n]; the transpose flags read the stored matrix transposed.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false);

/// softmax(q k^T) v with the softmax over each row; q[Nq x d], k[Nk x d], v[Nk x dv].
/// Only the attention weights are kept for the backward pass.
template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);
/// x[N x in] * w[in x out] + b[out]. `b` may be undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// ---- normalization -----------------------------------------------------------

/// Softmax over an arbitrary set of axes, max-subtracted.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, const std::vector<int>& axes);

/// Normalizes over the last axis (population variance), then applies gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-6));

/// Per-channel normalization over the spatial extent of an H x W x C map.
template <typename T> Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5));

// ---- convolution -------------------------------------------------------------

/// Cross-correlation of x[H x W x Cin] with kernel[kh x kw x Cin x Cout], zero padding.
/// `bias` ([Cout]) may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad);

// ---- indexing ----------------------------------------------------------------

/// out[i] = x[index[i]]; gradients scatter-add back. The workhorse for permutes,
/// slicing and nearest-neighbour resampling.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape out_shape, std::vector<std::int64_t> index);

/// Concatenates along the last axis; leading extents must agree.
template <typename T> Tensor<T> concat_last(const std::vector<Tensor<T>>& parts);

/// Columns [begin, begin + count) of a rank-2 tensor.
template <typename T> Tensor<T> slice_columns(const Tensor<T>& x, std::int64_t begin, std::int64_t count);

/// Nearest-neighbour 2x upsampling of an H x W x C map.
template <typename T> Tensor<T> upsample_nearest2(const Tensor<T>& x);

/// Element-wise comparison helpers used by tests and training code.
template <typename T> bool all_finite(const Tensor<T>& x);

}  // namespace doctr
