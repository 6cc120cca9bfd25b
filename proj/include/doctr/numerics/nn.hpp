#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "doctr/numerics/ops.hpp"
#include "doctr/numerics/rng.hpp"
#include "doctr/numerics/tensor.hpp"

namespace doctr {

/// Ordered collection of named trainable tensors. Registration order is the
/// serialization order, so two models built from the same config line up.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values);
  Tensor<T> zeros(const std::string& name, Shape shape);
  Tensor<T> ones(const std::string& name, Shape shape);
  Tensor<T> normal(const std::string& name, Shape shape, double stddev, Rng& rng);
  /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
  Tensor<T> xavier(const std::string& name, Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);
  /// Normal with std sqrt(2 / fan_in).
  Tensor<T> he(const std::string& name, Shape shape, std::int64_t fan_in, Rng& rng);

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
  const Tensor<T>* find(const std::string& name) const;
  std::int64_t count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
  static Linear create(ParameterSet<T>& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng);
};

template <typename T>
struct Conv {
  Tensor<T> kernel;  // [k x k x Cin x Cout]
  Tensor<T> bias;    // [Cout] or undefined
  int stride = 1;
  int pad = 0;
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, kernel, bias, stride, pad); }
  static Conv create(ParameterSet<T>& ps, const std::string& name, int k, std::int64_t cin, std::int64_t cout,
                     int stride, bool with_bias, Rng& rng);
};

template <typename T>
struct NormParams {
  Tensor<T> gain;
  Tensor<T> bias;
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
  static NormParams create(ParameterSet<T>& ps, const std::string& name, std::int64_t c);
};

/// Projections of one multi-head attention block. Each is c x c; head h owns
/// columns [h * c_w, (h + 1) * c_w) with c_w = c / heads.
template <typename T>
struct AttentionParams {
  Linear<T> q, k, v, out;
  static AttentionParams create(ParameterSet<T>& ps, const std::string& name, std::int64_t c, Rng& rng);
};

template <typename T>
struct FeedForwardParams {
  Linear<T> in;   // c -> hidden
  Linear<T> out;  // hidden -> c
  static FeedForwardParams create(ParameterSet<T>& ps, const std::string& name, std::int64_t c, std::int64_t hidden,
                                  Rng& rng);
};

/// softmax(Q K^T / sqrt(c_w)) V per head, heads concatenated and projected back to c.
/// `query` is Nq x c; `key` and `value` are Nk x c, before projection.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& value,
                               const AttentionParams<T>& p, int heads);

/// Linear -> ReLU -> Linear.
template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p);

}  // namespace doctr
