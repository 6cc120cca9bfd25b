#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "doctr/fields/backward_map.hpp"
#include "doctr/fields/resample.hpp"
#include "doctr/numerics/ops.hpp"
#include "testing.hpp"

using namespace doctr;
using doctr::testkit::grad_check;
using doctr::testkit::random_image;
using doctr::testkit::random_tensor;

namespace {

// Direct evaluation of the convex combination, one output value at a time.
std::vector<double> convex_oracle(const Tensor<double>& coarse, const Tensor<double>& mask, int f) {
  const int h = coarse.dim(0), w = coarse.dim(1), c = coarse.dim(2);
  std::vector<double> out(static_cast<std::size_t>(h * f) * (w * f) * c, 0.0);
  auto cv = [&](int i, int j, int k) -> double {
    if (i < 0 || i >= h || j < 0 || j >= w) return 0.0;
    return coarse.data()[(i * w + j) * c + k];
  };
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int sy = 0; sy < f; ++sy)
        for (int sx = 0; sx < f; ++sx)
          for (int k = 0; k < c; ++k) {
            double s = 0.0;
            for (int u = -1; u <= 1; ++u)
              for (int v = -1; v <= 1; ++v) {
                const double m = mask.data()[((i * w + j) * 9 + 3 * (u + 1) + (v + 1)) * f * f + sy * f + sx];
                s += m * cv(i - u, j - v, k);
              }
            out[((i * f + sy) * (w * f) + j * f + sx) * c + k] = s;
          }
  return out;
}

Tensor<double> random_mask(int h, int w, int f, Rng& rng, double spread = 2.0) {
  auto logits = random_tensor({h, w, 9, f * f}, rng, -spread, spread, false);
  return softmax(logits, {2}).detach();
}

}  // namespace

TEST(IdentityMap, TwoByTwo) {
  const auto m = identity_map(2, 2);
  EXPECT_EQ(m.u, (std::vector<float>{0, 1, 0, 1}));
  EXPECT_EQ(m.v, (std::vector<float>{0, 0, 1, 1}));
  const auto one = identity_map(1, 3);
  EXPECT_EQ(one.v, (std::vector<float>{0, 0, 0}));
  EXPECT_EQ(one.u, (std::vector<float>{0, 0.5f, 1}));
}

TEST(WarpImage, IdentityIsBitExact) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = rng.uniform_int(1, 300), w = rng.uniform_int(1, 300), c = rng.uniform_int(1, 3);
    const auto img = random_image(h, w, c, rng);
    EXPECT_EQ(warp_image(img, identity_map(h, w)), img) << h << "x" << w;
  }
}

TEST(WarpImage, OnePixelShiftOnRamp) {
  const int h = 4, w = 9;
  Image ramp(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) ramp.at(y, x) = static_cast<float>(x) / 8.0f;
  auto m = identity_map(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.u[m.index(y, x)] = static_cast<float>(x + 1) / (w - 1);
  const auto out = warp_image(ramp, m);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) EXPECT_FLOAT_EQ(out.at(y, x), ramp.at(y, x + 1));
    EXPECT_FLOAT_EQ(out.at(y, w - 1), ramp.at(y, w - 1));
  }
}

TEST(WarpImage, ConstantImageIsInvariant) {
  Rng rng(2);
  Image img(10, 12, 3, 0.375f);
  BackwardMap m(7, 5);
  for (auto& u : m.u) u = static_cast<float>(rng.uniform(-0.5, 1.5));
  for (auto& v : m.v) v = static_cast<float>(rng.uniform(-0.5, 1.5));
  const auto out = warp_image(img, m);
  EXPECT_EQ(out.height, 7);
  for (float x : out.data) EXPECT_FLOAT_EQ(x, 0.375f);
}

TEST(WarpImage, EmptySourceRejected) { EXPECT_THROW(warp_image(Image(), identity_map(2, 2)), ArgumentError); }

TEST(BilinearSample, IntegerMidpointAndClamp) {
  Image img(1, 2, 1);
  img.at(0, 0) = 0.0f;
  img.at(0, 1) = 10.0f;
  float v = 0;
  bilinear_sample(img, 1.0, 0.0, {&v, 1});
  EXPECT_EQ(v, 10.0f);
  bilinear_sample(img, 0.5, 0.0, {&v, 1});
  EXPECT_FLOAT_EQ(v, 5.0f);
  bilinear_sample(img, -5.0, -5.0, {&v, 1});
  EXPECT_EQ(v, 0.0f);
  bilinear_sample(img, 7.0, 3.0, {&v, 1});
  EXPECT_EQ(v, 10.0f);
}

TEST(ResizeMap, SameSizeIsIdentical) {
  Rng rng(3);
  BackwardMap m(5, 6);
  for (auto& u : m.u) u = static_cast<float>(rng.uniform());
  EXPECT_EQ(resize_map(m, 5, 6), m);
}

TEST(ResizeMap, IdentityStaysIdentity) {
  const auto big = resize_map(identity_map(36, 36), 288, 288);
  const auto ref = identity_map(288, 288);
  for (std::size_t i = 0; i < ref.u.size(); ++i) {
    EXPECT_NEAR(big.u[i], ref.u[i], 1e-6);
    EXPECT_NEAR(big.v[i], ref.v[i], 1e-6);
  }
  const auto small = resize_map(identity_map(4, 4), 8, 8);
  EXPECT_LT(map_l1(small, identity_map(8, 8)), 1e-7);
}

TEST(ResizeMap, ConstantStaysConstant) {
  BackwardMap m(3, 4);
  std::fill(m.u.begin(), m.u.end(), 0.25f);
  std::fill(m.v.begin(), m.v.end(), 0.75f);
  const auto r = resize_map(m, 11, 2);
  for (float u : r.u) EXPECT_FLOAT_EQ(u, 0.25f);
  for (float v : r.v) EXPECT_FLOAT_EQ(v, 0.75f);
}

TEST(MapL1, ConstantOffset) {
  auto a = identity_map(6, 6);
  auto b = a;
  for (auto& u : b.u) u += 0.5f;
  for (auto& v : b.v) v -= 0.5f;
  EXPECT_NEAR(map_l1(a, b), 0.5, 1e-6);
}

TEST(Bmap, RoundTripAndValidation) {
  Rng rng(4);
  BackwardMap m(3, 5);
  for (auto& u : m.u) u = static_cast<float>(rng.uniform(-1, 2));
  for (auto& v : m.v) v = static_cast<float>(rng.uniform(-1, 2));
  std::stringstream ss;
  write_bmap(ss, m);
  EXPECT_EQ(ss.str().size(), 4u + 4 + 4 + 1 + 15 * 8);
  EXPECT_EQ(ss.str().substr(0, 4), "BMAP");
  EXPECT_EQ(read_bmap(ss), m);
  std::stringstream bad("BMAX....");
  EXPECT_THROW(read_bmap(bad), IoError);
  std::string truncated = [&] {
    std::stringstream s2;
    write_bmap(s2, m);
    return s2.str().substr(0, 30);
  }();
  std::stringstream tr(truncated);
  EXPECT_THROW(read_bmap(tr), IoError);
}

TEST(ConvexUpsample, OneHotCenterIsNearestNeighbour) {
  Rng rng(5);
  const int h = 3, w = 4, f = 8;
  auto coarse = random_tensor({h, w, 2}, rng, -1, 1, false);
  std::vector<double> m(static_cast<std::size_t>(h * w * 9 * f * f), 0.0);
  for (int cell = 0; cell < h * w; ++cell)
    for (int k = 0; k < f * f; ++k) m[(cell * 9 + 4) * f * f + k] = 1.0;
  auto up = convex_upsample(coarse, Tensor<double>({h, w, 9, f * f}, m), f);
  ASSERT_EQ(up.shape(), (Shape{h * f, w * f, 2}));
  for (int y = 0; y < h * f; ++y)
    for (int x = 0; x < w * f; ++x)
      for (int k = 0; k < 2; ++k)
        EXPECT_EQ(up.data()[(y * w * f + x) * 2 + k], coarse.data()[((y / f) * w + x / f) * 2 + k]);
}

TEST(ConvexUpsample, ConstantFieldInterior) {
  Rng rng(6);
  const int h = 5, w = 5, f = 8;
  Tensor<double> coarse({h, w, 2}, 0.3);
  auto up = convex_upsample(coarse, random_mask(h, w, f, rng), f);
  for (int y = f; y < (h - 1) * f; ++y)
    for (int x = f; x < (w - 1) * f; ++x) EXPECT_NEAR(up.data()[(y * w * f + x) * 2], 0.3, 1e-12);
}

TEST(ConvexUpsample, MatchesLoopOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = rng.uniform_int(1, 6), w = rng.uniform_int(1, 6), f = rng.uniform_int(1, 8);
    auto coarse = random_tensor({h, w, 2}, rng, -2, 2, false);
    auto mask = random_mask(h, w, f, rng);
    const auto ref = convex_oracle(coarse, mask, f);
    const auto got = convex_upsample(coarse, mask, f);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(got.data()[i], ref[i], 1e-6);
  }
}

TEST(ConvexUpsample, InteriorOutputWithinNeighbourhoodRange) {
  Rng rng(8);
  const int h = 6, w = 6, f = 8;
  auto coarse = random_tensor({h, w, 1}, rng, -1, 1, false);
  auto up = convex_upsample(coarse, random_mask(h, w, f, rng, 4.0), f);
  for (int i = 1; i + 1 < h; ++i)
    for (int j = 1; j + 1 < w; ++j) {
      double lo = 1e9, hi = -1e9;
      for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) {
          lo = std::min(lo, coarse.data()[(i + a) * w + j + b]);
          hi = std::max(hi, coarse.data()[(i + a) * w + j + b]);
        }
      for (int sy = 0; sy < f; ++sy)
        for (int sx = 0; sx < f; ++sx) {
          const double v = up.data()[(i * f + sy) * w * f + j * f + sx];
          EXPECT_GE(v, lo - 1e-12);
          EXPECT_LE(v, hi + 1e-12);
        }
    }
}

TEST(ConvexUpsample, RejectsUnnormalizedMask) {
  Tensor<double> coarse({1, 1, 2}, 1.0);
  EXPECT_THROW(convex_upsample(coarse, Tensor<double>({1, 1, 9, 4}, 0.2), 2), ContractError);
  std::vector<double> neg(36, 0.0);
  for (int k = 0; k < 4; ++k) {
    neg[0 * 4 + k] = -0.5;
    neg[1 * 4 + k] = 1.5;
  }
  EXPECT_THROW(convex_upsample(coarse, Tensor<double>({1, 1, 9, 4}, neg), 2), ContractError);
  EXPECT_THROW(convex_upsample(coarse, Tensor<double>({1, 1, 9, 5}, 0.2), 2), DimensionError);
}

TEST(ConvexUpsample, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  const int h = 3, w = 2, f = 2;
  auto coarse = random_tensor({h, w, 2}, rng);
  auto logits = random_tensor({h, w, 9, f * f}, rng);
  auto weights = random_tensor({h * f, w * f, 2}, rng, -1, 1, false);
  auto r = grad_check([&] { return sum(mul(convex_upsample(coarse, softmax(logits, {2}), f), weights)); },
                      {coarse, logits});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(GridSample, IdentityIsExactAndMatchesWarpImage) {
  Rng rng(10);
  const auto img = random_image(13, 17, 3, rng);
  const auto src = image_to_tensor<float>(img);
  auto out = grid_sample(src, identity_grid<float>(13, 17));
  EXPECT_EQ(out.values(), src.values());

  BackwardMap m(9, 11);
  for (auto& u : m.u) u = static_cast<float>(rng.uniform(-0.1, 1.1));
  for (auto& v : m.v) v = static_cast<float>(rng.uniform(-0.1, 1.1));
  const auto warped = warp_image(img, m);
  const auto t = grid_sample(src, map_to_tensor<float>(m));
  for (std::size_t i = 0; i < warped.data.size(); ++i) EXPECT_NEAR(t.data()[i], warped.data[i], 1e-6);
}

TEST(GridSample, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  auto src = random_tensor({5, 6, 2}, rng);
  // Coordinates kept away from pixel-grid breakpoints and the border.
  std::vector<double> mv;
  for (int i = 0; i < 4 * 3; ++i) {
    const double px = rng.uniform_int(0, 4) + rng.uniform(0.2, 0.8);
    const double py = rng.uniform_int(0, 3) + rng.uniform(0.2, 0.8);
    mv.push_back(px / 5.0);
    mv.push_back(py / 4.0);
  }
  auto map = Tensor<double>::parameter({4, 3, 2}, mv);
  auto w = random_tensor({4, 3, 2}, rng, -1, 1, false);
  auto r = grad_check([&] { return sum(mul(grid_sample(src, map), w)); }, {src, map});
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(GridSample, ClampedCoordinatesHaveZeroGradient) {
  Rng rng(12);
  auto src = random_tensor({4, 4, 1}, rng, -1, 1, false);
  auto map = Tensor<double>::parameter({1, 1, 2}, {1.7, -0.4});
  sum(grid_sample(src, map)).backward();
  EXPECT_EQ(map.grad()[0], 0.0);
  EXPECT_EQ(map.grad()[1], 0.0);
}

TEST(ResizeBilinear, MatchesImageResizeAndGradient) {
  Rng rng(13);
  const auto img = random_image(5, 7, 2, rng);
  const auto ref = resize_image(img, 11, 4);
  const auto got = resize_bilinear(image_to_tensor<double>(img), 11, 4);
  for (std::size_t i = 0; i < ref.data.size(); ++i) EXPECT_NEAR(got.data()[i], ref.data[i], 1e-6);

  auto x = random_tensor({3, 4, 2}, rng);
  auto w = random_tensor({7, 5, 2}, rng, -1, 1, false);
  auto r = grad_check([&] { return sum(mul(resize_bilinear(x, 7, 5), w)); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(ResizeBilinear, LinearFieldIsReproduced) {
  auto up = resize_bilinear(identity_grid<double>(6, 6), 48, 48);
  const auto ref = identity_grid<double>(48, 48);
  for (std::size_t i = 0; i < ref.values().size(); ++i) EXPECT_NEAR(up.data()[i], ref.data()[i], 1e-12);
}
