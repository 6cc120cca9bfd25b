#include "doctr/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "doctr/numerics/gemm.hpp"

namespace doctr {

namespace {

template <typename T>
using NodeT = detail::Node<T>;

/// Gradient buffer of parent i, or nullptr when that parent is a constant.
template <typename T>
std::vector<T>* parent_grad(NodeT<T>& out, std::size_t i) {
  auto& p = *out.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  const auto& xd = x.values();
  std::vector<T> y(xd.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xd[i]);
  return Tensor<T>::make_result(x.shape(), std::move(y), {x}, [df](NodeT<T>& out) {
    auto* g = parent_grad(out, 0);
    if (!g) return;
    const auto& xv = out.parents[0]->data;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += out.grad[i] * df(xv[i], out.data[i]);
  });
}

template <typename T>
T softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

// ---- elementwise -------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.values());
  const auto& bd = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(y), {a, b}, [](NodeT<T>& out) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(out, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += out.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> y(a.values());
  const auto& bd = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(y), {a, b}, [](NodeT<T>& out) {
    if (auto* g = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += out.grad[i];
    }
    if (auto* g = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= out.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto& ad = a.values();
  const auto& bd = b.values();
  std::vector<T> y(ad.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] * bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(y), {a, b}, [](NodeT<T>& out) {
    const auto& av = out.parents[0]->data;
    const auto& bv = out.parents[1]->data;
    if (auto* g = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += out.grad[i] * bv[i];
    }
    if (auto* g = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += out.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::int64_t c = x.dim(-1);
  if (bias.numel() != c) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match last axis of " +
                         shape_string(x.shape()));
  }
  std::vector<T> y(x.values());
  const auto& bd = bias.values();
  const std::size_t cc = static_cast<std::size_t>(c);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bd[i % cc];
  return Tensor<T>::make_result(x.shape(), std::move(y), {x, bias}, [cc](NodeT<T>& out) {
    if (auto* g = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += out.grad[i];
    }
    if (auto* g = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i % cc] += out.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul_broadcast_last(const Tensor<T>& x, const Tensor<T>& w) {
  const std::int64_t c = x.dim(-1);
  if (w.numel() * c != x.numel()) {
    throw DimensionError("mul_broadcast_last: " + shape_string(w.shape()) + " does not cover the leading axes of " +
                         shape_string(x.shape()));
  }
  const std::size_t cc = static_cast<std::size_t>(c);
  const auto& xd = x.values();
  const auto& wd = w.values();
  std::vector<T> y(xd.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] * wd[i / cc];
  return Tensor<T>::make_result(x.shape(), std::move(y), {x, w}, [cc](NodeT<T>& out) {
    const auto& xv = out.parents[0]->data;
    const auto& wv = out.parents[1]->data;
    if (auto* g = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += out.grad[i] * wv[i / cc];
    }
    if (auto* g = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i / cc] += out.grad[i] * xv[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(x, [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> smooth_clamp01(const Tensor<T>& x, T sharpness) {
  if (!(sharpness > T(0))) throw ArgumentError("smooth_clamp01: sharpness must be positive");
  const T b = sharpness;
  return unary(
      x, [b](T v) { return (softplus(b * v) - softplus(b * (v - T(1)))) / b; },
      [b](T v, T) { return sigmoid_scalar(b * v) - sigmoid_scalar(b * (v - T(1))); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

// ---- reductions --------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.values()) s += v;
  return Tensor<T>::make_result(Shape{1}, {s}, {x}, [](NodeT<T>& out) {
    if (auto* g = parent_grad(out, 0)) {
      for (auto& v : *g) v += out.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l1_loss");
  const auto& ad = a.values();
  const auto& bd = b.values();
  T s = T(0);
  for (std::size_t i = 0; i < ad.size(); ++i) s += std::abs(ad[i] - bd[i]);
  const T n = static_cast<T>(ad.size());
  return Tensor<T>::make_result(Shape{1}, {s / n}, {a, b}, [n](NodeT<T>& out) {
    const auto& av = out.parents[0]->data;
    const auto& bv = out.parents[1]->data;
    const T g0 = out.grad[0] / n;
    auto* ga = parent_grad(out, 0);
    auto* gb = parent_grad(out, 1);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sg = d > T(0) ? g0 : (d < T(0) ? -g0 : T(0));
      if (ga) (*ga)[i] += sg;
      if (gb) (*gb)[i] -= sg;
    }
  });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target, Reduction reduction, T eps) {
  require_same_shape(pred, target, "bce_loss");
  const auto& p = pred.values();
  const auto& y = target.values();
  T s = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T pc = std::clamp(p[i], eps, T(1) - eps);
    s -= y[i] * std::log(pc) + (T(1) - y[i]) * std::log(T(1) - pc);
  }
  const T norm = reduction == Reduction::Mean ? static_cast<T>(p.size()) : T(1);
  return Tensor<T>::make_result(Shape{1}, {s / norm}, {pred, target}, [eps, norm](NodeT<T>& out) {
    const auto& pv = out.parents[0]->data;
    const auto& yv = out.parents[1]->data;
    const T g0 = out.grad[0] / norm;
    if (auto* g = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] <= eps || pv[i] >= T(1) - eps) continue;
        (*g)[i] += g0 * (-yv[i] / pv[i] + (T(1) - yv[i]) / (T(1) - pv[i]));
      }
    }
    if (auto* g = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const T pc = std::clamp(pv[i], eps, T(1) - eps);
        (*g)[i] += g0 * (std::log(T(1) - pc) - std::log(pc));
      }
    }
  });
}

// ---- linear algebra ----------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const int ar = static_cast<int>(a.dim(0)), ac = static_cast<int>(a.dim(1));
  const int br = static_cast<int>(b.dim(0)), bc = static_cast<int>(b.dim(1));
  const int m = trans_a ? ac : ar;
  const int k = trans_a ? ar : ac;
  const int kb = trans_b ? bc : br;
  const int n = trans_b ? br : bc;
  if (k != kb) {
    throw DimensionError("matmul inner extents disagree: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  std::vector<T> c(static_cast<std::size_t>(m) * n);
  gemm<T>(trans_a, trans_b, m, n, k, T(1), a.values().data(), ac, b.values().data(), bc, T(0), c.data(), n);
  return Tensor<T>::make_result(
      Shape{m, n}, std::move(c), {a, b}, [=](NodeT<T>& out) {
        const T* av = out.parents[0]->data.data();
        const T* bv = out.parents[1]->data.data();
        const T* dc = out.grad.data();
        if (auto* g = parent_grad(out, 0)) {
          if (!trans_a) {
            gemm<T>(false, !trans_b, m, k, n, T(1), dc, n, bv, bc, T(1), g->data(), ac);
          } else {
            gemm<T>(trans_b, true, k, m, n, T(1), bv, bc, dc, n, T(1), g->data(), ac);
          }
        }
        if (auto* g = parent_grad(out, 1)) {
          if (!trans_b) {
            gemm<T>(!trans_a, false, k, n, m, T(1), av, ac, dc, n, T(1), g->data(), bc);
          } else {
            gemm<T>(true, trans_a, n, k, m, T(1), dc, n, av, ac, T(1), g->data(), bc);
          }
        }
      });
}

template <typename T>
Tensor<T> attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw DimensionError("attention_core: incompatible q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  const int nq = static_cast<int>(q.dim(0)), nk = static_cast<int>(k.dim(0));
  const int d = static_cast<int>(q.dim(1)), dv = static_cast<int>(v.dim(1));
  auto weights = std::make_shared<std::vector<T>>(static_cast<std::size_t>(nq) * nk);
  T* wd = weights->data();
  gemm<T>(false, true, nq, nk, d, T(1), q.values().data(), d, k.values().data(), d, T(0), wd, nk);
  for (int i = 0; i < nq; ++i) {
    T* row = wd + static_cast<std::size_t>(i) * nk;
    const T mx = *std::max_element(row, row + nk);
    T z = T(0);
    for (int j = 0; j < nk; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    const T inv = T(1) / z;
    for (int j = 0; j < nk; ++j) row[j] *= inv;
  }
  std::vector<T> y(static_cast<std::size_t>(nq) * dv);
  gemm<T>(false, false, nq, dv, nk, T(1), wd, nk, v.values().data(), dv, T(0), y.data(), dv);
  const bool needs_graph = grad_mode_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  if (!needs_graph) weights.reset();
  return Tensor<T>::make_result(Shape{nq, dv}, std::move(y), {q, k, v}, [=](NodeT<T>& out) {
    const T* w = weights->data();
    const auto& qd = out.parents[0]->data;
    const auto& kd = out.parents[1]->data;
    const auto& vd = out.parents[2]->data;
    if (auto* gv = parent_grad(out, 2)) {
      gemm<T>(true, false, nk, dv, nq, T(1), w, nk, out.grad.data(), dv, T(1), gv->data(), dv);
    }
    auto* gq = parent_grad(out, 0);
    auto* gk = parent_grad(out, 1);
    if (!gq && !gk) return;
    // dS = W * (dW - rowsum(dW * W)), dW = dY V^T.
    std::vector<T> ds(static_cast<std::size_t>(nq) * nk);
    gemm<T>(false, true, nq, nk, dv, T(1), out.grad.data(), dv, vd.data(), dv, T(0), ds.data(), nk);
    for (int i = 0; i < nq; ++i) {
      T* r = ds.data() + static_cast<std::size_t>(i) * nk;
      const T* wr = w + static_cast<std::size_t>(i) * nk;
      T dot = T(0);
      for (int j = 0; j < nk; ++j) dot += r[j] * wr[j];
      for (int j = 0; j < nk; ++j) r[j] = wr[j] * (r[j] - dot);
    }
    if (gq) gemm<T>(false, false, nq, d, nk, T(1), ds.data(), nk, kd.data(), d, T(1), gq->data(), d);
    if (gk) gemm<T>(true, false, nk, d, nq, T(1), ds.data(), nk, qd.data(), d, T(1), gk->data(), d);
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  auto y = matmul(x, w);
  return b.defined() ? add_bias(y, b) : y;
}

// ---- normalization -----------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, const std::vector<int>& axes) {
  if (axes.empty()) throw ArgumentError("softmax: empty axis set");
  const Shape& s = x.shape();
  const int r = static_cast<int>(s.size());
  std::vector<bool> reduced(static_cast<std::size_t>(r), false);
  for (int ax : axes) {
    const int a = ax < 0 ? ax + r : ax;
    if (a < 0 || a >= r) throw ArgumentError("softmax: axis " + std::to_string(ax) + " invalid for " + shape_string(s));
    reduced[static_cast<std::size_t>(a)] = true;
  }
  std::vector<std::int64_t> stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) stride[i] = stride[i + 1] * s[i + 1];

  // Offsets of every element in one reduction group, and of every group's base.
  std::vector<std::int64_t> inner{0}, outer{0};
  for (int i = 0; i < r; ++i) {
    auto& list = reduced[i] ? inner : outer;
    std::vector<std::int64_t> next;
    next.reserve(list.size() * static_cast<std::size_t>(s[i]));
    for (auto base : list) {
      for (std::int64_t j = 0; j < s[i]; ++j) next.push_back(base + j * stride[i]);
    }
    list = std::move(next);
  }
  auto offsets = std::make_shared<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>>(
      std::move(inner), std::move(outer));

  const auto& xd = x.values();
  std::vector<T> y(xd.size());
  for (auto base : offsets->second) {
    T mx = -std::numeric_limits<T>::infinity();
    for (auto o : offsets->first) mx = std::max(mx, xd[base + o]);
    T z = T(0);
    for (auto o : offsets->first) {
      const T e = std::exp(xd[base + o] - mx);
      y[base + o] = e;
      z += e;
    }
    for (auto o : offsets->first) y[base + o] /= z;
  }
  return Tensor<T>::make_result(s, std::move(y), {x}, [offsets](NodeT<T>& out) {
    auto* g = parent_grad(out, 0);
    if (!g) return;
    for (auto base : offsets->second) {
      T dot = T(0);
      for (auto o : offsets->first) dot += out.grad[base + o] * out.data[base + o];
      for (auto o : offsets->first) (*g)[base + o] += out.data[base + o] * (out.grad[base + o] - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::int64_t c = x.dim(-1);
  if (c == 0) throw ArgumentError("layer_norm: empty channel axis");
  if (gain.numel() != c || bias.numel() != c) {
    throw DimensionError("layer_norm: gain/bias do not match channel extent of " + shape_string(x.shape()));
  }
  const std::size_t cc = static_cast<std::size_t>(c);
  const std::size_t rows = static_cast<std::size_t>(x.numel()) / cc;
  const auto& xd = x.values();
  const auto& gd = gain.values();
  const auto& bd = bias.values();
  auto xhat = std::make_shared<std::vector<T>>(xd.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> y(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * cc;
    T mu = T(0);
    for (std::size_t j = 0; j < cc; ++j) mu += row[j];
    mu /= static_cast<T>(cc);
    T var = T(0);
    for (std::size_t j = 0; j < cc; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(cc);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < cc; ++j) {
      const T h = (row[j] - mu) * rs;
      (*xhat)[r * cc + j] = h;
      y[r * cc + j] = h * gd[j] + bd[j];
    }
  }
  return Tensor<T>::make_result(x.shape(), std::move(y), {x, gain, bias}, [=](NodeT<T>& out) {
    const auto& gv = out.parents[1]->data;
    auto* gx = parent_grad(out, 0);
    auto* gg = parent_grad(out, 1);
    auto* gb = parent_grad(out, 2);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dy = out.grad.data() + r * cc;
      const T* h = xhat->data() + r * cc;
      if (gg || gb) {
        for (std::size_t j = 0; j < cc; ++j) {
          if (gg) (*gg)[j] += dy[j] * h[j];
          if (gb) (*gb)[j] += dy[j];
        }
      }
      if (!gx) continue;
      T m1 = T(0), m2 = T(0);
      for (std::size_t j = 0; j < cc; ++j) {
        const T dh = dy[j] * gv[j];
        m1 += dh;
        m2 += dh * h[j];
      }
      m1 /= static_cast<T>(cc);
      m2 /= static_cast<T>(cc);
      for (std::size_t j = 0; j < cc; ++j) {
        (*gx)[r * cc + j] += (*rstd)[r] * (dy[j] * gv[j] - m1 - h[j] * m2);
      }
    }
  });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
  if (x.rank() != 3) throw DimensionError("instance_norm expects H x W x C, got " + shape_string(x.shape()));
  const std::size_t cc = static_cast<std::size_t>(x.dim(2));
  const std::size_t n = static_cast<std::size_t>(x.dim(0) * x.dim(1));
  const auto& xd = x.values();
  auto xhat = std::make_shared<std::vector<T>>(xd.size());
  auto rstd = std::make_shared<std::vector<T>>(cc);
  std::vector<T> mu(cc, T(0)), var(cc, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cc; ++c) mu[c] += xd[i * cc + c];
  for (auto& m : mu) m /= static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cc; ++c) {
      const T d = xd[i * cc + c] - mu[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < cc; ++c) (*rstd)[c] = T(1) / std::sqrt(var[c] / static_cast<T>(n) + eps);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cc; ++c) (*xhat)[i * cc + c] = (xd[i * cc + c] - mu[c]) * (*rstd)[c];
  std::vector<T> y(*xhat);
  return Tensor<T>::make_result(x.shape(), std::move(y), {x}, [=](NodeT<T>& out) {
    auto* g = parent_grad(out, 0);
    if (!g) return;
    std::vector<T> m1(cc, T(0)), m2(cc, T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < cc; ++c) {
        m1[c] += out.grad[i * cc + c];
        m2[c] += out.grad[i * cc + c] * (*xhat)[i * cc + c];
      }
    for (std::size_t c = 0; c < cc; ++c) {
      m1[c] /= static_cast<T>(n);
      m2[c] /= static_cast<T>(n);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < cc; ++c) {
        const std::size_t k = i * cc + c;
        (*g)[k] += (*rstd)[c] * (out.grad[k] - m1[c] - (*xhat)[k] * m2[c]);
      }
  });
}

// ---- convolution -------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    throw DimensionError("conv2d expects H x W x Cin input and kh x kw x Cin x Cout kernel, got " +
                         shape_string(x.shape()) + " and " + shape_string(kernel.shape()));
  }
  const int h = static_cast<int>(x.dim(0)), w = static_cast<int>(x.dim(1)), cin = static_cast<int>(x.dim(2));
  const int kh = static_cast<int>(kernel.dim(0)), kw = static_cast<int>(kernel.dim(1));
  const int cout = static_cast<int>(kernel.dim(3));
  if (kernel.dim(2) != cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) + " input channels, input has " +
                         std::to_string(cin));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ArgumentError("conv2d: kernel extents must be odd");
  if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
  if (pad < 0) throw ArgumentError("conv2d: padding must be non-negative");
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) + " larger than padded input " +
                         shape_string(x.shape()));
  }
  if (bias.defined() && bias.numel() != cout) throw DimensionError("conv2d: bias extent must equal Cout");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  const int kdim = kh * kw * cin;
  const std::size_t npix = static_cast<std::size_t>(ho) * wo;

  // im2col: one row per output pixel, columns ordered (ky, kx, ci) to match the kernel layout.
  // Rebuilt in the backward pass rather than kept alive with the graph.
  auto im2col = [=](const std::vector<T>& xd) {
    std::vector<T> cols(npix * kdim, T(0));
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T* row = cols.data() + (static_cast<std::size_t>(oy) * wo + ox) * kdim;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const T* src = xd.data() + (static_cast<std::size_t>(iy) * w + ix) * cin;
            std::copy(src, src + cin, row + (ky * kw + kx) * cin);
          }
        }
      }
    }
    return cols;
  };
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;
  std::vector<T> cols_storage;
  if (!pointwise) cols_storage = im2col(x.values());
  const T* cols = pointwise ? x.values().data() : cols_storage.data();
  std::vector<T> y(npix * cout);
  gemm<T>(false, false, static_cast<int>(npix), cout, kdim, T(1), cols, kdim, kernel.values().data(), cout, T(0),
          y.data(), cout);
  cols_storage = {};
  if (bias.defined()) {
    const auto& bd = bias.values();
    for (std::size_t i = 0; i < npix; ++i)
      for (int c = 0; c < cout; ++c) y[i * cout + c] += bd[c];
  }
  std::vector<Tensor<T>> parents{x, kernel};
  if (bias.defined()) parents.push_back(bias);
  return Tensor<T>::make_result(
      Shape{ho, wo, cout}, std::move(y), std::move(parents), [=](NodeT<T>& out) {
        const int np = static_cast<int>(npix);
        if (auto* gk = parent_grad(out, 1)) {
          const auto& xv = out.parents[0]->data;
          std::vector<T> rebuilt;
          if (!pointwise) rebuilt = im2col(xv);
          const T* c = pointwise ? xv.data() : rebuilt.data();
          gemm<T>(true, false, kdim, cout, np, T(1), c, kdim, out.grad.data(), cout, T(1), gk->data(), cout);
        }
        if (out.parents.size() > 2) {
          if (auto* gb = parent_grad(out, 2)) {
            for (std::size_t i = 0; i < npix; ++i)
              for (int c = 0; c < cout; ++c) (*gb)[c] += out.grad[i * cout + c];
          }
        }
        if (auto* gx = parent_grad(out, 0)) {
          std::vector<T> dcols(npix * kdim);
          gemm<T>(false, true, np, kdim, cout, T(1), out.grad.data(), cout, out.parents[1]->data.data(), cout, T(0),
                  dcols.data(), kdim);
          for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
              const T* row = dcols.data() + (static_cast<std::size_t>(oy) * wo + ox) * kdim;
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= w) continue;
                  T* dst = gx->data() + (static_cast<std::size_t>(iy) * w + ix) * cin;
                  const T* src = row + (ky * kw + kx) * cin;
                  for (int c = 0; c < cin; ++c) dst[c] += src[c];
                }
              }
            }
          }
        }
      });
}

// ---- indexing ----------------------------------------------------------------

template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape out_shape, std::vector<std::int64_t> index) {
  if (static_cast<std::int64_t>(index.size()) != numel(out_shape)) {
    throw DimensionError("gather: index length does not match output shape " + shape_string(out_shape));
  }
  const auto& xd = x.values();
  const auto n = static_cast<std::int64_t>(xd.size());
  std::vector<T> y(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= n) throw DimensionError("gather: index out of range");
    y[i] = xd[static_cast<std::size_t>(index[i])];
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  return Tensor<T>::make_result(std::move(out_shape), std::move(y), {x}, [idx](NodeT<T>& out) {
    auto* g = parent_grad(out, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx->size(); ++i) (*g)[static_cast<std::size_t>((*idx)[i])] += out.grad[i];
  });
}

template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_last: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  const std::int64_t rows = numel(lead);
  std::vector<std::int64_t> widths;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    l.pop_back();
    if (l != lead) throw DimensionError("concat_last: leading extents disagree");
    widths.push_back(p.dim(-1));
    total += p.dim(-1);
  }
  std::vector<T> y(static_cast<std::size_t>(rows * total));
  std::int64_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& d = parts[k].values();
    for (std::int64_t r = 0; r < rows; ++r) {
      std::copy(d.begin() + r * widths[k], d.begin() + (r + 1) * widths[k], y.begin() + r * total + off);
    }
    off += widths[k];
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  return Tensor<T>::make_result(std::move(out_shape), std::move(y), parts, [=](NodeT<T>& out) {
    std::int64_t o = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto* g = parent_grad(out, k)) {
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < widths[k]; ++j) (*g)[r * widths[k] + j] += out.grad[r * total + o + j];
      }
      o += widths[k];
    }
  });
}

template <typename T>
Tensor<T> slice_columns(const Tensor<T>& x, std::int64_t begin, std::int64_t count) {
  if (x.rank() != 2) throw DimensionError("slice_columns expects a matrix");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  if (begin < 0 || count <= 0 || begin + count > cols) throw DimensionError("slice_columns: range out of bounds");
  std::vector<std::int64_t> index(static_cast<std::size_t>(rows * count));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < count; ++j) index[r * count + j] = r * cols + begin + j;
  return gather(x, Shape{rows, count}, std::move(index));
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  if (x.rank() != 3) throw DimensionError("upsample_nearest2 expects H x W x C");
  const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  std::vector<std::int64_t> index(static_cast<std::size_t>(4 * h * w * c));
  for (std::int64_t y = 0; y < 2 * h; ++y)
    for (std::int64_t xx = 0; xx < 2 * w; ++xx)
      for (std::int64_t k = 0; k < c; ++k) index[(y * 2 * w + xx) * c + k] = ((y / 2) * w + xx / 2) * c + k;
  return gather(x, Shape{2 * h, 2 * w, c}, std::move(index));
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

#define DOCTR_INSTANTIATE_OPS(T)                                                                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul_broadcast_last(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                       \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                  \
  template Tensor<T> relu(const Tensor<T>&);                                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                        \
  template Tensor<T> smooth_clamp01(const Tensor<T>&, T);                                              \
  template Tensor<T> abs(const Tensor<T>&);                                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                            \
  template Tensor<T> mean(const Tensor<T>&);                                                           \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&, Reduction, T);                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);                           \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> softmax(const Tensor<T>&, const std::vector<int>&);                               \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);              \
  template Tensor<T> instance_norm(const Tensor<T>&, T);                                               \
  template Tensor<T> attention_core(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);           \
  template Tensor<T> gather(const Tensor<T>&, Shape, std::vector<std::int64_t>);                       \
  template Tensor<T> concat_last(const std::vector<Tensor<T>>&);                                       \
  template Tensor<T> slice_columns(const Tensor<T>&, std::int64_t, std::int64_t);                      \
  template Tensor<T> upsample_nearest2(const Tensor<T>&);                                              \
  template bool all_finite(const Tensor<T>&);

DOCTR_INSTANTIATE_OPS(float)
DOCTR_INSTANTIATE_OPS(double)

}  // namespace doctr
