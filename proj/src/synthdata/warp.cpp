#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "doctr/numerics/errors.hpp"
#include "doctr/synthdata/synthdata.hpp"

namespace doctr {

namespace {

// Projective map of the unit square onto a quadrilateral.
struct Homography {
  double a, b, c, d, e, f, g, h;
};

Homography square_to_quad(const std::array<double, 8>& q) {
  const double x0 = q[0], y0 = q[1], x1 = q[2], y1 = q[3], x2 = q[4], y2 = q[5], x3 = q[6], y3 = q[7];
  const double sx = x0 - x1 + x2 - x3, sy = y0 - y1 + y2 - y3;
  Homography m{};
  if (sx == 0.0 && sy == 0.0) {
    m = {x1 - x0, x3 - x0, x0, y1 - y0, y3 - y0, y0, 0.0, 0.0};
  } else {
    const double dx1 = x1 - x2, dx2 = x3 - x2, dy1 = y1 - y2, dy2 = y3 - y2;
    const double den = dx1 * dy2 - dx2 * dy1;
    m.g = (sx * dy2 - dx2 * sy) / den;
    m.h = (dx1 * sy - sx * dy1) / den;
    m.a = x1 - x0 + m.g * x1;
    m.b = x3 - x0 + m.h * x3;
    m.c = x0;
    m.d = y1 - y0 + m.g * y1;
    m.e = y3 - y0 + m.h * y3;
    m.f = y0;
  }
  return m;
}

bool has_projection(const WarpParams& p) {
  if (p.inset != 0.0) return true;
  if (p.jitter == 0.0) return false;
  return std::any_of(p.corner_offsets.begin(), p.corner_offsets.end(), [](double v) { return v != 0.0; });
}

std::array<double, 8> corners(const WarpParams& p) {
  const double lo = p.inset, hi = 1.0 - p.inset;
  std::array<double, 8> q{lo, lo, hi, lo, hi, hi, lo, hi};
  for (std::size_t i = 0; i < 8; ++i) q[i] += p.jitter * p.corner_offsets[i];
  return q;
}

}  // namespace

WarpParams WarpParams::random(Rng& rng, double strength) {
  WarpParams p;
  p.inset = rng.uniform(0.07, 0.14);
  p.jitter = strength * rng.uniform(0.0, 0.05);
  for (auto& o : p.corner_offsets) o = rng.uniform(-1.0, 1.0);
  const int n = rng.uniform_int(1, 4);
  for (int i = 0; i < n; ++i) {
    Fold f;
    f.horizontal = rng.uniform() < 0.5;
    f.frequency = rng.uniform(0.5, 2.0);
    f.amplitude = strength * rng.uniform(-0.025, 0.025);
    f.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.folds.push_back(f);
  }
  p.curl = strength * rng.uniform(-0.06, 0.06);
  return p;
}

WarpParams WarpParams::damped(double factor) const {
  WarpParams p = *this;
  p.jitter *= factor;
  for (auto& f : p.folds) f.amplitude *= factor;
  p.curl *= factor;
  return p;
}

std::array<double, 2> warp_point(const WarpParams& p, double u, double v) {
  double su = u, sv = v;
  for (const auto& f : p.folds) {
    if (f.horizontal)
      su += f.amplitude * std::sin(2.0 * std::numbers::pi * f.frequency * u + f.phase);
    else
      sv += f.amplitude * std::sin(2.0 * std::numbers::pi * f.frequency * v + f.phase);
  }
  if (p.curl != 0.0) sv += p.curl * std::sin(std::numbers::pi * u);
  if (!has_projection(p)) return {su, sv};
  const Homography m = square_to_quad(corners(p));
  const double w = m.g * su + m.h * sv + 1.0;
  return {(m.a * su + m.b * sv + m.c) / w, (m.d * su + m.e * sv + m.f) / w};
}

namespace {

std::array<double, 4> jacobian(const WarpParams& p, double u, double v) {
  constexpr double h = 1e-5;
  const auto xp = warp_point(p, u + h, v), xm = warp_point(p, u - h, v);
  const auto yp = warp_point(p, u, v + h), ym = warp_point(p, u, v - h);
  return {(xp[0] - xm[0]) / (2 * h), (yp[0] - ym[0]) / (2 * h), (xp[1] - xm[1]) / (2 * h), (yp[1] - ym[1]) / (2 * h)};
}

}  // namespace

double min_jacobian(const WarpParams& p, int n) {
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto J = jacobian(p, (j + 0.5) / n, (i + 0.5) / n);
      lo = std::min(lo, J[0] * J[3] - J[1] * J[2]);
    }
  return lo;
}

BackwardMap gen_warp(const WarpParams& params, int height, int width, WarpParams* used) {
  WarpParams p = params;
  int attempt = 0;
  while (min_jacobian(p) <= kMinJacobian) {
    if (++attempt > 5) throw ContractError("gen_warp: Jacobian stays non-positive after damping");
    p = p.damped(0.5);
  }
  if (used) *used = p;
  BackwardMap m(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
      const double v = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
      const auto q = warp_point(p, u, v);
      m.u[m.index(y, x)] = static_cast<float>(q[0]);
      m.v[m.index(y, x)] = static_cast<float>(q[1]);
    }
  return m;
}

BackwardMap invert_warp(const WarpParams& params, int height, int width) {
  BackwardMap m(height, width);
  const double span = 1.0 - 2.0 * params.inset;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double qx = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
      const double qy = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
      double u = (qx - params.inset) / span, v = (qy - params.inset) / span;
      double err = std::numeric_limits<double>::infinity();
      for (int it = 0; it < 20 && err > 1e-12; ++it) {
        const auto f = warp_point(params, u, v);
        const double rx = qx - f[0], ry = qy - f[1];
        err = std::hypot(rx, ry);
        const auto J = jacobian(params, u, v);
        const double det = J[0] * J[3] - J[1] * J[2];
        if (!(std::abs(det) > 1e-12)) break;
        u += (J[3] * rx - J[1] * ry) / det;
        v += (-J[2] * rx + J[0] * ry) / det;
      }
      const auto f = warp_point(params, u, v);
      const bool ok = std::hypot(qx - f[0], qy - f[1]) < 1e-6;
      m.u[m.index(y, x)] = ok ? static_cast<float>(u) : std::numeric_limits<float>::quiet_NaN();
      m.v[m.index(y, x)] = ok ? static_cast<float>(v) : std::numeric_limits<float>::quiet_NaN();
    }
  return m;
}

}  // namespace doctr
