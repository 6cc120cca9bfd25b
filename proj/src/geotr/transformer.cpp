#include "doctr/geotr/transformer.hpp"

namespace doctr {

template <typename T>
EncoderLayer<T> EncoderLayer<T>::create(ParameterSet<T>& ps, const std::string& name, std::int64_t c,
                                        std::int64_t hidden, Rng& rng) {
  EncoderLayer l;
  l.attn = AttentionParams<T>::create(ps, name + ".attn", c, rng);
  l.norm1 = NormParams<T>::create(ps, name + ".norm1", c);
  l.ffn = FeedForwardParams<T>::create(ps, name + ".ffn", c, hidden, rng);
  l.norm2 = NormParams<T>::create(ps, name + ".norm2", c);
  return l;
}

template <typename T>
DecoderLayer<T> DecoderLayer<T>::create(ParameterSet<T>& ps, const std::string& name, std::int64_t c,
                                        std::int64_t hidden, Rng& rng) {
  DecoderLayer l;
  l.self_attn = AttentionParams<T>::create(ps, name + ".self_attn", c, rng);
  l.norm1 = NormParams<T>::create(ps, name + ".norm1", c);
  l.cross_attn = AttentionParams<T>::create(ps, name + ".cross_attn", c, rng);
  l.norm2 = NormParams<T>::create(ps, name + ".norm2", c);
  l.ffn = FeedForwardParams<T>::create(ps, name + ".ffn", c, hidden, rng);
  l.norm3 = NormParams<T>::create(ps, name + ".norm3", c);
  return l;
}

template <typename T>
Tensor<T> encode(const Tensor<T>& f_s, const Tensor<T>& e_p, const std::vector<EncoderLayer<T>>& layers, int heads) {
  if (f_s.shape() != e_p.shape()) {
    throw DimensionError("encode: features " + shape_string(f_s.shape()) + " vs position embedding " +
                         shape_string(e_p.shape()));
  }
  auto f = add(f_s, e_p);
  for (const auto& l : layers) {
    auto f1 = l.norm1(add(multi_head_attention(f, f, f, l.attn, heads), f));
    f = l.norm2(add(feed_forward(f1, l.ffn), f1));
  }
  return f;
}

template <typename T>
Tensor<T> decode(const Tensor<T>& f_k, const Tensor<T>& e_p, const Tensor<T>& e_d,
                 const std::vector<DecoderLayer<T>>& layers, int heads, DecoderResidual residual) {
  if (e_p.shape() != e_d.shape() || e_p.rank() != 2) {
    throw DimensionError("decode: embeddings " + shape_string(e_p.shape()) + " and " + shape_string(e_d.shape()) +
                         " must share an N x c shape");
  }
  if (f_k.rank() != 2 || f_k.dim(1) != e_p.dim(1)) {
    throw DimensionError("decode: encoded features " + shape_string(f_k.shape()) + " do not match width " +
                         std::to_string(e_p.dim(1)));
  }
  auto y = add(e_p, e_d);
  for (const auto& l : layers) {
    auto y1 = l.norm1(add(multi_head_attention(y, y, y, l.self_attn, heads), y));
    const auto& skip = residual == DecoderResidual::Previous ? y : y1;
    auto y2 = l.norm2(add(multi_head_attention(y1, f_k, f_k, l.cross_attn, heads), skip));
    y = l.norm3(add(feed_forward(y2, l.ffn), y2));
  }
  return y;
}

template struct EncoderLayer<float>;
template struct EncoderLayer<double>;
template struct DecoderLayer<float>;
template struct DecoderLayer<double>;
template Tensor<float> encode(const Tensor<float>&, const Tensor<float>&, const std::vector<EncoderLayer<float>>&, int);
template Tensor<double> encode(const Tensor<double>&, const Tensor<double>&, const std::vector<EncoderLayer<double>>&,
                               int);
template Tensor<float> decode(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              const std::vector<DecoderLayer<float>>&, int, DecoderResidual);
template Tensor<double> decode(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                               const std::vector<DecoderLayer<double>>&, int, DecoderResidual);

}  // namespace doctr
