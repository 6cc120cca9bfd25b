#include "doctr/fields/resample.hpp"

#include <cmath>
#include <memory>

#include "doctr/fields/backward_map.hpp"

namespace doctr {

namespace {

template <typename T>
std::vector<T>* parent_grad(detail::Node<T>& out, std::size_t i) {
  auto& p = *out.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

struct ResizeTap {
  int i0, i1;
  double t;
};

std::vector<ResizeTap> resize_taps(int src, int dst) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(dst));
  const double s = dst > 1 ? static_cast<double>(src - 1) / (dst - 1) : 0.0;
  for (int i = 0; i < dst; ++i) {
    const double f = i * s;
    const int i0 = std::min(static_cast<int>(f), src - 1);
    taps[static_cast<std::size_t>(i)] = {i0, std::min(i0 + 1, src - 1), f - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> grid_sample(const Tensor<T>& src, const Tensor<T>& map) {
  if (src.rank() != 3) throw DimensionError("grid_sample: source must be H x W x C");
  if (map.rank() != 3 || map.dim(2) != 2) throw DimensionError("grid_sample: map must be H x W x 2");
  const int h = static_cast<int>(src.dim(0)), w = static_cast<int>(src.dim(1)), c = static_cast<int>(src.dim(2));
  const int ho = static_cast<int>(map.dim(0)), wo = static_cast<int>(map.dim(1));
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  auto taps = std::make_shared<std::vector<std::pair<detail::AxisTap, detail::AxisTap>>>(n);
  const auto& md = map.values();
  const auto& sd = src.values();
  std::vector<T> y(n * c);
  auto at = [&](int yy, int xx, int k) { return sd[(static_cast<std::size_t>(yy) * w + xx) * c + k]; };
  for (std::size_t i = 0; i < n; ++i) {
    const auto tx = detail::axis_tap(static_cast<double>(md[2 * i]) * (w - 1), w);
    const auto ty = detail::axis_tap(static_cast<double>(md[2 * i + 1]) * (h - 1), h);
    (*taps)[i] = {tx, ty};
    const T fx = static_cast<T>(tx.frac), fy = static_cast<T>(ty.frac);
    for (int k = 0; k < c; ++k) {
      y[i * c + k] = (T(1) - fx) * (T(1) - fy) * at(ty.i0, tx.i0, k) + fx * (T(1) - fy) * at(ty.i0, tx.i1, k) +
                     (T(1) - fx) * fy * at(ty.i1, tx.i0, k) + fx * fy * at(ty.i1, tx.i1, k);
    }
  }
  return Tensor<T>::make_result(Shape{ho, wo, c}, std::move(y), {src, map}, [=](detail::Node<T>& out) {
    const auto& sv = out.parents[0]->data;
    auto* gs = parent_grad(out, 0);
    auto* gm = parent_grad(out, 1);
    auto idx = [&](int yy, int xx, int k) { return (static_cast<std::size_t>(yy) * w + xx) * c + k; };
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [tx, ty] = (*taps)[i];
      const T fx = static_cast<T>(tx.frac), fy = static_cast<T>(ty.frac);
      T du = T(0), dv = T(0);
      for (int k = 0; k < c; ++k) {
        const T g = out.grad[i * c + k];
        if (gs) {
          (*gs)[idx(ty.i0, tx.i0, k)] += g * (T(1) - fx) * (T(1) - fy);
          (*gs)[idx(ty.i0, tx.i1, k)] += g * fx * (T(1) - fy);
          (*gs)[idx(ty.i1, tx.i0, k)] += g * (T(1) - fx) * fy;
          (*gs)[idx(ty.i1, tx.i1, k)] += g * fx * fy;
        }
        if (gm) {
          const T v00 = sv[idx(ty.i0, tx.i0, k)], v01 = sv[idx(ty.i0, tx.i1, k)];
          const T v10 = sv[idx(ty.i1, tx.i0, k)], v11 = sv[idx(ty.i1, tx.i1, k)];
          du += g * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
          dv += g * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
        }
      }
      if (gm) {
        if (!tx.clamped) (*gm)[2 * i] += du * static_cast<T>(w - 1);
        if (!ty.clamped) (*gm)[2 * i + 1] += dv * static_cast<T>(h - 1);
      }
    }
  });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int height, int width) {
  if (x.rank() != 3) throw DimensionError("resize_bilinear expects h x w x C");
  if (height < 1 || width < 1) throw ArgumentError("resize_bilinear: target extent must be positive");
  const int h = static_cast<int>(x.dim(0)), w = static_cast<int>(x.dim(1)), c = static_cast<int>(x.dim(2));
  auto ty = std::make_shared<std::vector<ResizeTap>>(resize_taps(h, height));
  auto tx = std::make_shared<std::vector<ResizeTap>>(resize_taps(w, width));
  const auto& xd = x.values();
  auto idx = [=](int yy, int xx, int k) { return (static_cast<std::size_t>(yy) * w + xx) * c + k; };
  std::vector<T> y(static_cast<std::size_t>(height) * width * c);
  for (int oy = 0; oy < height; ++oy) {
    const auto& a = (*ty)[oy];
    for (int ox = 0; ox < width; ++ox) {
      const auto& b = (*tx)[ox];
      const T fy = static_cast<T>(a.t), fx = static_cast<T>(b.t);
      for (int k = 0; k < c; ++k) {
        const T top = (T(1) - fx) * xd[idx(a.i0, b.i0, k)] + fx * xd[idx(a.i0, b.i1, k)];
        const T bot = (T(1) - fx) * xd[idx(a.i1, b.i0, k)] + fx * xd[idx(a.i1, b.i1, k)];
        y[(static_cast<std::size_t>(oy) * width + ox) * c + k] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return Tensor<T>::make_result(Shape{height, width, c}, std::move(y), {x}, [=](detail::Node<T>& out) {
    auto* g = parent_grad(out, 0);
    if (!g) return;
    for (int oy = 0; oy < height; ++oy) {
      const auto& a = (*ty)[oy];
      for (int ox = 0; ox < width; ++ox) {
        const auto& b = (*tx)[ox];
        const T fy = static_cast<T>(a.t), fx = static_cast<T>(b.t);
        for (int k = 0; k < c; ++k) {
          const T go = out.grad[(static_cast<std::size_t>(oy) * width + ox) * c + k];
          (*g)[idx(a.i0, b.i0, k)] += go * (T(1) - fy) * (T(1) - fx);
          (*g)[idx(a.i0, b.i1, k)] += go * (T(1) - fy) * fx;
          (*g)[idx(a.i1, b.i0, k)] += go * fy * (T(1) - fx);
          (*g)[idx(a.i1, b.i1, k)] += go * fy * fx;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> convex_upsample(const Tensor<T>& coarse, const Tensor<T>& mask, int factor) {
  if (factor < 1) throw ArgumentError("convex_upsample: factor must be positive");
  if (coarse.rank() != 3) throw DimensionError("convex_upsample: coarse field must be h x w x C");
  const int h = static_cast<int>(coarse.dim(0)), w = static_cast<int>(coarse.dim(1)), c = static_cast<int>(coarse.dim(2));
  const int sub = factor * factor;
  if (mask.shape() != Shape{h, w, 9, sub}) {
    throw DimensionError("convex_upsample: mask " + shape_string(mask.shape()) + " does not match coarse field " +
                         shape_string(coarse.shape()) + " at factor " + std::to_string(factor));
  }
  const auto& md = mask.values();
  const auto& cd = coarse.values();
  for (std::size_t cell = 0; cell < static_cast<std::size_t>(h) * w; ++cell) {
    for (int k = 0; k < sub; ++k) {
      double s = 0.0;
      for (int n = 0; n < 9; ++n) {
        const T m = md[(cell * 9 + n) * sub + k];
        if (!(m >= T(-1e-6))) throw ContractError("convex_upsample: negative or non-finite mask weight");
        s += static_cast<double>(m);
      }
      if (std::abs(s - 1.0) > 1e-4) {
        throw ContractError("convex_upsample: mask weights sum to " + std::to_string(s) + " instead of 1");
      }
    }
  }
  const int ho = h * factor, wo = w * factor;
  std::vector<T> y(static_cast<std::size_t>(ho) * wo * c, T(0));
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t cell = static_cast<std::size_t>(i) * w + j;
      for (int a = 0; a < 3; ++a) {
        const int ci = i - (a - 1);
        if (ci < 0 || ci >= h) continue;
        for (int b = 0; b < 3; ++b) {
          const int cj = j - (b - 1);
          if (cj < 0 || cj >= w) continue;
          const T* src = cd.data() + (static_cast<std::size_t>(ci) * w + cj) * c;
          const T* wts = md.data() + (cell * 9 + static_cast<std::size_t>(3 * a + b)) * sub;
          for (int sy = 0; sy < factor; ++sy) {
            for (int sx = 0; sx < factor; ++sx) {
              const T m = wts[sy * factor + sx];
              T* dst = y.data() + (static_cast<std::size_t>(i * factor + sy) * wo + (j * factor + sx)) * c;
              for (int k = 0; k < c; ++k) dst[k] += m * src[k];
            }
          }
        }
      }
    }
  }
  return Tensor<T>::make_result(Shape{ho, wo, c}, std::move(y), {coarse, mask}, [=](detail::Node<T>& out) {
    const auto& cv = out.parents[0]->data;
    const auto& mv = out.parents[1]->data;
    auto* gc = parent_grad(out, 0);
    auto* gmk = parent_grad(out, 1);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const std::size_t cell = static_cast<std::size_t>(i) * w + j;
        for (int a = 0; a < 3; ++a) {
          const int ci = i - (a - 1);
          if (ci < 0 || ci >= h) continue;
          for (int b = 0; b < 3; ++b) {
            const int cj = j - (b - 1);
            if (cj < 0 || cj >= w) continue;
            const std::size_t src_off = (static_cast<std::size_t>(ci) * w + cj) * c;
            const std::size_t wt_off = (cell * 9 + static_cast<std::size_t>(3 * a + b)) * sub;
            for (int sy = 0; sy < factor; ++sy) {
              for (int sx = 0; sx < factor; ++sx) {
                const std::size_t kk = static_cast<std::size_t>(sy * factor + sx);
                const T* go = out.grad.data() + (static_cast<std::size_t>(i * factor + sy) * wo + (j * factor + sx)) * c;
                T dm = T(0);
                for (int k = 0; k < c; ++k) {
                  dm += go[k] * cv[src_off + k];
                  if (gc) (*gc)[src_off + k] += go[k] * mv[wt_off + kk];
                }
                if (gmk) (*gmk)[wt_off + kk] += dm;
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> identity_grid(int height, int width) {
  if (height < 1 || width < 1) throw ArgumentError("identity_grid: extents must be positive");
  std::vector<T> d(static_cast<std::size_t>(height) * width * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      d[2 * i] = width > 1 ? static_cast<T>(static_cast<double>(x) / (width - 1)) : T(0);
      d[2 * i + 1] = height > 1 ? static_cast<T>(static_cast<double>(y) / (height - 1)) : T(0);
    }
  }
  return Tensor<T>(Shape{height, width, 2}, std::move(d));
}

template Tensor<float> grid_sample(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> grid_sample(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> resize_bilinear(const Tensor<float>&, int, int);
template Tensor<double> resize_bilinear(const Tensor<double>&, int, int);
template Tensor<float> convex_upsample(const Tensor<float>&, const Tensor<float>&, int);
template Tensor<double> convex_upsample(const Tensor<double>&, const Tensor<double>&, int);
template Tensor<float> identity_grid<float>(int, int);
template Tensor<double> identity_grid<double>(int, int);

}  // namespace doctr
