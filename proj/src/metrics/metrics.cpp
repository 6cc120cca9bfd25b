#include "doctr/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctr/numerics/errors.hpp"

namespace doctr {

DenseFlow::DenseFlow(int h, int w)
    : height(h), width(w), dx(static_cast<std::size_t>(h) * w, 0.0f), dy(static_cast<std::size_t>(h) * w, 0.0f) {}

namespace {

// Single-channel double plane.
struct Plane {
  int h = 0;
  int w = 0;
  std::vector<double> v;
  Plane() = default;
  Plane(int hh, int ww) : h(hh), w(ww), v(static_cast<std::size_t>(hh) * ww, 0.0) {}
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane gray_plane(const Image& img) {
  const Image g = img.channels == 1 ? img : to_gray(img);
  Plane p(g.height, g.width);
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = g.data[i];
  return p;
}

Plane halve(const Plane& p) {
  Plane out(p.h / 2, p.w / 2);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                             p.at(2 * y + 1, 2 * x + 1));
  return out;
}

// Inclusive-exclusive box sum helper over a summed-area table of size (h+1) x (w+1).
double box_sum(const std::vector<double>& sat, int w, int y0, int x0, int y1, int x1) {
  const std::size_t s = static_cast<std::size_t>(w) + 1;
  return sat[y1 * s + x1] - sat[y0 * s + x1] - sat[y1 * s + x0] + sat[y0 * s + x0];
}

void match_level(const Plane& ref, const Plane& tgt, const FlowParams& prm, std::vector<int>& fx,
                 std::vector<int>& fy) {
  const int h = ref.h, w = ref.w, R = prm.radius, side = 2 * R + 1;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const int nd = side * side;
  const int lo = prm.block / 2, hi = prm.block - lo;
  std::vector<float> cost(static_cast<std::size_t>(nd) * n);
  std::vector<double> sat((static_cast<std::size_t>(h) + 1) * (w + 1));
  for (int d = 0; d < nd; ++d) {
    const int rx = d % side - R, ry = d / side - R;
    std::fill(sat.begin(), sat.end(), 0.0);
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const int sy = std::clamp(y + fy[i] + ry, 0, h - 1);
        const int sx = std::clamp(x + fx[i] + rx, 0, w - 1);
        row += std::abs(ref.at(y, x) - tgt.at(sy, sx));
        sat[(y + 1) * (static_cast<std::size_t>(w) + 1) + x + 1] = sat[y * (static_cast<std::size_t>(w) + 1) + x + 1] + row;
      }
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        cost[static_cast<std::size_t>(d) * n + static_cast<std::size_t>(y) * w + x] = static_cast<float>(
            box_sum(sat, w, std::max(y - lo, 0), std::max(x - lo, 0), std::min(y + hi, h), std::min(x + hi, w)));
  }

  // Start from the carried flow; a pixel moves only when that strictly lowers its energy.
  const int zero = R * side + R;
  std::vector<int> choice(n, zero);
  std::vector<int> tx(fx), ty(fy);

  // Iterated conditional modes on the smoothness-regularized energy.
  const double lambda = prm.smoothness;
  auto energy = [&](std::size_t i, int y, int x, int d) {
    const int cx = fx[i] + d % side - R, cy = fy[i] + d / side - R;
    double e = cost[static_cast<std::size_t>(d) * n + i];
    auto nb = [&](int yy, int xx) {
      const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
      e += lambda * (std::abs(cx - tx[j]) + std::abs(cy - ty[j]));
    };
    if (y > 0) nb(y - 1, x);
    if (y + 1 < h) nb(y + 1, x);
    if (x > 0) nb(y, x - 1);
    if (x + 1 < w) nb(y, x + 1);
    return e;
  };
  for (int sweep = 0; sweep < prm.smoothing_sweeps; ++sweep) {
    bool changed = false;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        double best = energy(i, y, x, choice[i]);
        int arg = choice[i];
        for (int d = 0; d < nd; ++d) {
          const double e = energy(i, y, x, d);
          if (e < best) {
            best = e;
            arg = d;
          }
        }
        if (arg != choice[i]) {
          choice[i] = arg;
          tx[i] = fx[i] + arg % side - R;
          ty[i] = fy[i] + arg / side - R;
          changed = true;
        }
      }
    if (!changed) break;
  }
  fx = std::move(tx);
  fy = std::move(ty);
}

}  // namespace

DenseFlow dense_flow(const Image& ref, const Image& target, const FlowParams& params) {
  if (ref.height != target.height || ref.width != target.width)
    throw DimensionError("dense_flow: reference and target extents differ");
  if (params.block < 1 || params.radius < 0 || params.levels < 1 || params.smoothness < 0.0)
    throw ArgumentError("dense_flow: invalid parameters");
  if (ref.height < params.block || ref.width < params.block)
    throw ArgumentError("dense_flow: image smaller than one block");

  std::vector<Plane> rp{gray_plane(ref)}, tp{gray_plane(target)};
  while (static_cast<int>(rp.size()) < params.levels && rp.back().h / 2 >= params.block &&
         rp.back().w / 2 >= params.block) {
    rp.push_back(halve(rp.back()));
    tp.push_back(halve(tp.back()));
  }

  std::vector<int> fx, fy;
  for (int l = static_cast<int>(rp.size()) - 1; l >= 0; --l) {
    const Plane& r = rp[static_cast<std::size_t>(l)];
    const std::size_t n = static_cast<std::size_t>(r.h) * r.w;
    std::vector<int> ux(n, 0), uy(n, 0);
    if (!fx.empty()) {
      const Plane& c = rp[static_cast<std::size_t>(l) + 1];
      for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) {
          const std::size_t j = static_cast<std::size_t>(std::min(y / 2, c.h - 1)) * c.w + std::min(x / 2, c.w - 1);
          ux[static_cast<std::size_t>(y) * r.w + x] = 2 * fx[j];
          uy[static_cast<std::size_t>(y) * r.w + x] = 2 * fy[j];
        }
    }
    match_level(r, tp[static_cast<std::size_t>(l)], params, ux, uy);
    fx = std::move(ux);
    fy = std::move(uy);
  }

  DenseFlow flow(ref.height, ref.width);
  for (std::size_t i = 0; i < fx.size(); ++i) {
    flow.dx[i] = static_cast<float>(fx[i]);
    flow.dy[i] = static_cast<float>(fy[i]);
  }
  return flow;
}

double local_distortion(const DenseFlow& flow) {
  if (flow.dx.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < flow.dx.size(); ++i) s += std::hypot(static_cast<double>(flow.dx[i]), flow.dy[i]);
  return s / static_cast<double>(flow.dx.size());
}

void MsSsimParams::validate() const {
  if (window < 1 || window % 2 == 0) throw ArgumentError("MS-SSIM window must be odd and positive");
  if (!(sigma > 0.0)) throw ArgumentError("MS-SSIM sigma must be positive");
  const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(s - 1.0) > 1e-3) throw ArgumentError("MS-SSIM level weights must sum to 1");
}

namespace {

struct SsimTerms {
  double ssim = 0.0;
  double cs = 0.0;
};

Plane filter_valid(const Plane& p, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  Plane tmp(p.h, p.w - n + 1);
  for (int y = 0; y < tmp.h; ++y)
    for (int x = 0; x < tmp.w; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * p.at(y, x + i);
      tmp.at(y, x) = s;
    }
  Plane out(p.h - n + 1, tmp.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp.at(y + i, x);
      out.at(y, x) = s;
    }
  return out;
}

SsimTerms ssim_terms(const Plane& a, const Plane& b, const MsSsimParams& prm) {
  std::vector<double> k(static_cast<std::size_t>(prm.window));
  const int c = prm.window / 2;
  double total = 0.0;
  for (int i = 0; i < prm.window; ++i) total += k[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (prm.sigma * prm.sigma));
  for (auto& v : k) v /= total;

  Plane aa(a.h, a.w), bb(a.h, a.w), ab(a.h, a.w);
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Plane ma = filter_valid(a, k), mb = filter_valid(b, k);
  const Plane saa = filter_valid(aa, k), sbb = filter_valid(bb, k), sab = filter_valid(ab, k);
  const double c1 = (prm.k1) * (prm.k1), c2 = (prm.k2) * (prm.k2);
  SsimTerms t;
  for (std::size_t i = 0; i < ma.v.size(); ++i) {
    const double mx = ma.v[i], my = mb.v[i];
    const double vx = saa.v[i] - mx * mx, vy = sbb.v[i] - my * my, cxy = sab.v[i] - mx * my;
    const double cs = (2.0 * cxy + c2) / (vx + vy + c2);
    const double l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    t.cs += cs;
    t.ssim += l * cs;
  }
  t.cs /= static_cast<double>(ma.v.size());
  t.ssim /= static_cast<double>(ma.v.size());
  return t;
}

void check_pair(const Image& a, const Image& b, const MsSsimParams& prm, const char* who) {
  prm.validate();
  if (a.height != b.height || a.width != b.width) throw DimensionError(std::string(who) + ": extent mismatch");
  if (a.height < prm.window || a.width < prm.window)
    throw ArgumentError(std::string(who) + ": image smaller than the window");
}

}  // namespace

double ssim(const Image& a, const Image& b, const MsSsimParams& params) {
  check_pair(a, b, params, "ssim");
  return ssim_terms(gray_plane(a), gray_plane(b), params).ssim;
}

int ms_ssim_levels(int height, int width, const MsSsimParams& params) {
  if (height < params.window || width < params.window) return 0;
  int levels = 1;
  while (levels < static_cast<int>(params.weights.size()) && height / 2 >= params.window && width / 2 >= params.window) {
    height /= 2;
    width /= 2;
    ++levels;
  }
  return levels;
}

double ms_ssim(const Image& a, const Image& b, const MsSsimParams& params) {
  check_pair(a, b, params, "ms_ssim");
  const int levels = ms_ssim_levels(a.height, a.width, params);
  double wsum = 0.0;
  for (int l = 0; l < levels; ++l) wsum += params.weights[static_cast<std::size_t>(l)];
  Plane pa = gray_plane(a), pb = gray_plane(b);
  double result = 1.0;
  for (int l = 0; l < levels; ++l) {
    const SsimTerms t = ssim_terms(pa, pb, params);
    const double w = params.weights[static_cast<std::size_t>(l)] / wsum;
    const double term = l + 1 == levels ? t.ssim : t.cs;
    result *= std::pow(std::max(term, 0.0), w);
    if (l + 1 < levels) {
      pa = halve(pa);
      pb = halve(pb);
    }
  }
  return result;
}

std::size_t edit_distance(const std::string& hyp, const std::string& ref) {
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

double cer(const std::string& hyp, const std::string& ref) {
  if (ref.empty()) throw ArgumentError("cer: empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

}  // namespace doctr
