#pragma once

// Post-norm transformer encoder and parallel decoder shared by both networks.

#include <string>
#include <vector>

#include "doctr/numerics/nn.hpp"

namespace doctr {

/// Which tensor feeds the residual branch of the cross-attention sub-layer.
enum class DecoderResidual {
  Previous,           // Y''_i = LN(MA(Q'_i, K'_i, V'_i) + Y_{i-1}), as printed
  AfterSelfAttention  // Y''_i = LN(MA(Q'_i, K'_i, V'_i) + Y'_i)
};

template <typename T>
struct EncoderLayer {
  AttentionParams<T> attn;
  NormParams<T> norm1;
  FeedForwardParams<T> ffn;
  NormParams<T> norm2;

  static EncoderLayer create(ParameterSet<T>& ps, const std::string& name, std::int64_t c, std::int64_t hidden,
                             Rng& rng);
};

template <typename T>
struct DecoderLayer {
  AttentionParams<T> self_attn;
  NormParams<T> norm1;
  AttentionParams<T> cross_attn;
  NormParams<T> norm2;
  FeedForwardParams<T> ffn;
  NormParams<T> norm3;

  static DecoderLayer create(ParameterSet<T>& ps, const std::string& name, std::int64_t c, std::int64_t hidden,
                             Rng& rng);
};

/// F_0 = f_s + E_p, then per layer
///   F'_i = LN(MA(F_{i-1}) + F_{i-1}),  F_i = LN(FFN(F'_i) + F'_i).
template <typename T>
Tensor<T> encode(const Tensor<T>& f_s, const Tensor<T>& e_p, const std::vector<EncoderLayer<T>>& layers, int heads);

/// Y_0 = E_p + E_d, then per layer self-attention over Y, cross-attention with
/// keys and values from F_K, and a feed-forward sub-layer, each post-normed.
template <typename T>
Tensor<T> decode(const Tensor<T>& f_k, const Tensor<T>& e_p, const Tensor<T>& e_d,
                 const std::vector<DecoderLayer<T>>& layers, int heads,
                 DecoderResidual residual = DecoderResidual::Previous);

}  // namespace doctr
