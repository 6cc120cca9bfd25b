#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctr/metrics/metrics.hpp"
#include "doctr/numerics/errors.hpp"
#include "doctr/synthdata/synthdata.hpp"

namespace doctr {

namespace {

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

Image gen_shading(std::uint64_t seed, int height, int width) {
  if (height < 1 || width < 1) throw ArgumentError("gen_shading: extents must be positive");
  Rng rng(seed);
  const double amp = rng.uniform(0.1, 0.3);
  struct Wave {
    double fx, fy, phase, weight;
  };
  std::vector<Wave> waves(3);
  double wsum = 0.0;
  for (auto& w : waves) {
    w = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.2, 1.0)};
    wsum += w.weight;
  }
  struct Band {
    double px, py, nx, ny, half, edge, depth;
  };
  const double short_side = std::min(height, width);
  std::vector<Band> bands(static_cast<std::size_t>(rng.uniform_int(0, 2)));
  for (auto& b : bands) {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    b = {rng.uniform(0.0, width), rng.uniform(0.0, height), std::cos(theta), std::sin(theta),
         short_side * rng.uniform(0.08, 0.2), short_side * 0.15, rng.uniform(0.15, 0.3)};
  }
  Image out(height, width, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (const auto& w : waves)
        s += w.weight * std::cos(2.0 * std::numbers::pi * (w.fx * x / width + w.fy * y / height) + w.phase);
      double f = 1.0 - amp * 0.5 * (s / wsum + 1.0);
      for (const auto& b : bands) {
        const double d = std::abs((x - b.px) * b.nx + (y - b.py) * b.ny);
        f *= 1.0 - b.depth * (1.0 - smoothstep(b.half, b.half + b.edge, d));
      }
      out.at(y, x) = static_cast<float>(std::clamp(f, 0.4, 1.0));
    }
  return out;
}

Image gen_background(std::uint64_t seed, int height, int width) {
  if (height < 1 || width < 1) throw ArgumentError("gen_background: extents must be positive");
  Rng rng(seed);
  const double tone = rng.uniform(0.08, 0.4);
  std::array<double, 3> base{};
  for (auto& c : base) c = std::clamp(tone + rng.uniform(-0.08, 0.08), 0.0, 1.0);
  const double fx = rng.uniform(2.0, 10.0), fy = rng.uniform(-6.0, 6.0), phase = rng.uniform(0.0, 6.28);
  const double stripe = rng.uniform(0.02, 0.08);
  Image out(height, width, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double t = stripe * std::sin(2.0 * std::numbers::pi * (fx * x / width + fy * y / height) + phase);
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = static_cast<float>(std::clamp(base[static_cast<std::size_t>(c)] + t + rng.uniform(-0.03, 0.03), 0.0, 1.0));
    }
  const int clutter = rng.uniform_int(1, 4);
  for (int k = 0; k < clutter; ++k) {
    const int h = static_cast<int>(height * rng.uniform(0.05, 0.3)), w = static_cast<int>(width * rng.uniform(0.05, 0.3));
    const int y0 = rng.uniform_int(0, height - 1), x0 = rng.uniform_int(0, width - 1);
    std::array<float, 3> col{};
    for (auto& c : col) c = static_cast<float>(rng.uniform(0.05, 0.5));
    for (int y = y0; y < std::min(y0 + h, height); ++y)
      for (int x = x0; x < std::min(x0 + w, width); ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = col[static_cast<std::size_t>(c)];
  }
  return out;
}

SampleRecord gen_sample(std::uint64_t seed, const SynthConfig& cfg) {
  const int h = cfg.height, w = cfg.width;
  if (h < 16 || w < 16) throw ArgumentError("gen_sample: extents below 16 pixels");
  SampleRecord r;
  r.seed = seed;
  Page page = render_document(mix_seed(seed, 1), h, w, cfg.glyph_scale);
  r.clean = std::move(page.image);
  r.text = std::move(page.text);

  Rng warp_rng = Rng(seed).fork(2);
  WarpParams used;
  r.map = gen_warp(WarpParams::random(warp_rng, cfg.warp_strength), h, w, &used);
  const BackwardMap inverse = invert_warp(used, h, w);

  r.shading = cfg.shading ? gen_shading(mix_seed(seed, 3), h, w) : Image(h, w, 1, 1.0f);
  const Image shaded = multiply_pixels(r.clean, r.shading);
  r.distorted = gen_background(mix_seed(seed, 4), h, w);
  r.mask = DocMask{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto i = inverse.index(y, x);
      const float u = inverse.u[i], v = inverse.v[i];
      if (!(u >= 0.0f && u <= 1.0f && v >= 0.0f && v <= 1.0f)) continue;
      r.mask.m[i] = 1;
      bilinear_sample(shaded, static_cast<double>(u) * (w - 1), static_cast<double>(v) * (h - 1),
                      std::span<float>(r.distorted.data.data() + i * 3, 3));
    }
  const double score = round_trip_score(r);
  if (!(score > kRoundTripThreshold))
    throw ContractError("gen_sample: seed " + std::to_string(seed) + " fails the round-trip check (" + std::to_string(score) + ")");
  return r;
}

double round_trip_score(const SampleRecord& r) {
  Image back = warp_image(r.distorted, r.map);
  for (int y = 0; y < back.height; ++y)
    for (int x = 0; x < back.width; ++x)
      for (int c = 0; c < back.channels; ++c)
        back.at(y, x, c) = std::clamp(back.at(y, x, c) / r.shading.at(y, x), 0.0f, 1.0f);
  return ms_ssim(back, r.clean);
}

}  // namespace doctr
