#include "doctr/numerics/nn.hpp"

#include <cmath>

namespace doctr {

template <typename T>
Tensor<T> ParameterSet<T>::add(const std::string& name, Shape shape, std::vector<T> values) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
Tensor<T> ParameterSet<T>::zeros(const std::string& name, Shape shape) {
  const auto n = static_cast<std::size_t>(numel(shape));
  return add(name, std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> ParameterSet<T>::ones(const std::string& name, Shape shape) {
  const auto n = static_cast<std::size_t>(numel(shape));
  return add(name, std::move(shape), std::vector<T>(n, T(1)));
}

template <typename T>
Tensor<T> ParameterSet<T>::normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.normal() * stddev);
  return add(name, std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> ParameterSet<T>::xavier(const std::string& name, Shape shape, std::int64_t fan_in, std::int64_t fan_out,
                                  Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
  return add(name, std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> ParameterSet<T>::he(const std::string& name, Shape shape, std::int64_t fan_in, Rng& rng) {
  return normal(name, std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

template <typename T>
const Tensor<T>* ParameterSet<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

template <typename T>
std::int64_t ParameterSet<T>::count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

template <typename T>
Linear<T> Linear<T>::create(ParameterSet<T>& ps, const std::string& name, std::int64_t in, std::int64_t out,
                            Rng& rng) {
  Linear l;
  l.weight = ps.xavier(name + ".weight", {in, out}, in, out, rng);
  l.bias = ps.zeros(name + ".bias", {out});
  return l;
}

template <typename T>
Conv<T> Conv<T>::create(ParameterSet<T>& ps, const std::string& name, int k, std::int64_t cin, std::int64_t cout,
                        int stride, bool with_bias, Rng& rng) {
  Conv c;
  c.kernel = ps.he(name + ".kernel", {k, k, cin, cout}, k * k * cin, rng);
  if (with_bias) c.bias = ps.zeros(name + ".bias", {cout});
  c.stride = stride;
  c.pad = k / 2;
  return c;
}

template <typename T>
NormParams<T> NormParams<T>::create(ParameterSet<T>& ps, const std::string& name, std::int64_t c) {
  return {ps.ones(name + ".gain", {c}), ps.zeros(name + ".bias", {c})};
}

template <typename T>
AttentionParams<T> AttentionParams<T>::create(ParameterSet<T>& ps, const std::string& name, std::int64_t c,
                                              Rng& rng) {
  AttentionParams p;
  p.q = Linear<T>::create(ps, name + ".q", c, c, rng);
  p.k = Linear<T>::create(ps, name + ".k", c, c, rng);
  p.v = Linear<T>::create(ps, name + ".v", c, c, rng);
  p.out = Linear<T>::create(ps, name + ".out", c, c, rng);
  return p;
}

template <typename T>
FeedForwardParams<T> FeedForwardParams<T>::create(ParameterSet<T>& ps, const std::string& name, std::int64_t c,
                                                  std::int64_t hidden, Rng& rng) {
  return {Linear<T>::create(ps, name + ".in", c, hidden, rng), Linear<T>::create(ps, name + ".out", hidden, c, rng)};
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& value,
                               const AttentionParams<T>& p, int heads) {
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2) {
    throw DimensionError("multi_head_attention expects N x c sequences");
  }
  const std::int64_t c = query.dim(1);
  if (heads < 1 || c % heads != 0) {
    throw ConfigError("attention width " + std::to_string(c) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (key.dim(0) != value.dim(0) || key.dim(1) != c || value.dim(1) != c) {
    throw DimensionError("multi_head_attention: key/value extents " + shape_string(key.shape()) + ", " +
                         shape_string(value.shape()) + " do not fit query " + shape_string(query.shape()));
  }
  const std::int64_t cw = c / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(cw));
  auto q = scale(p.q(query), inv_sqrt);
  auto k = p.k(key);
  auto v = p.v(value);
  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = heads == 1 ? q : slice_columns(q, h * cw, cw);
    auto kh = heads == 1 ? k : slice_columns(k, h * cw, cw);
    auto vh = heads == 1 ? v : slice_columns(v, h * cw, cw);
    outs.push_back(attention_core(qh, kh, vh));
  }
  auto joined = heads == 1 ? outs[0] : concat_last(outs);
  return p.out(joined);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p) {
  if (x.rank() != 2 || x.dim(1) != p.in.weight.dim(0)) {
    throw DimensionError("feed_forward: input " + shape_string(x.shape()) + " does not match weights " +
                         shape_string(p.in.weight.shape()));
  }
  return p.out(relu(p.in(x)));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct Conv<float>;
template struct Conv<double>;
template struct NormParams<float>;
template struct NormParams<double>;
template struct AttentionParams<float>;
template struct AttentionParams<double>;
template struct FeedForwardParams<float>;
template struct FeedForwardParams<double>;
template Tensor<float> multi_head_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                            const AttentionParams<float>&, int);
template Tensor<double> multi_head_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                             const AttentionParams<double>&, int);
template Tensor<float> feed_forward(const Tensor<float>&, const FeedForwardParams<float>&);
template Tensor<double> feed_forward(const Tensor<double>&, const FeedForwardParams<double>&);

}  // namespace doctr
