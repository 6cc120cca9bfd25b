#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "doctr/fields/resample.hpp"
#include "doctr/geotr/geotr.hpp"
#include "naive.hpp"
#include "testing.hpp"

using namespace doctr;
using doctr::testkit::grad_check;
using doctr::testkit::random_tensor;

namespace {

constexpr double kLayerOracleTol = 1e-5;

GeoConfig gradcheck_config() {
  GeoConfig c;
  c.input_size = 16;
  c.c_g = 8;
  c.depth = 1;
  c.heads = 2;
  c.ffn_mult = 2;
  c.head_channels = {2, 3, 4};
  c.tail_channels = 4;
  return c;
}

void set_values(ParameterSet<double>& ps, const std::string& name, double v) {
  auto t = *ps.find(name);
  for (auto& x : t.mutable_data()) x = v;
}

void set_values(ParameterSet<float>& ps, const std::string& name, float v) {
  auto t = *ps.find(name);
  for (auto& x : t.mutable_data()) x = v;
}

}  // namespace

TEST(GeoConfig, Validation) {
  GeoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.input_size = 100;
  EXPECT_THROW(c.validate(), ConfigError);
  c = GeoConfig{};
  c.heads = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = GeoConfig{};
  c.depth = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(GeoConfig{}.tokens(), 1296);
}

TEST(GeoHead, DefaultShapeAndDeterminism) {
  GeoTr<float> a(GeoConfig{}, 3);
  Tensor<float> zero({288, 288, 3}, 0.0f);
  NoGradGuard g;
  const auto f1 = a.head(zero);
  EXPECT_EQ(f1.shape(), (Shape{1296, 512}));
  EXPECT_TRUE(all_finite(f1));
  GeoTr<float> b(GeoConfig{}, 3);
  EXPECT_EQ(b.head(zero).values(), f1.values());
  EXPECT_THROW(a.head(Tensor<float>({144, 144, 3})), DimensionError);
}

TEST(GeoHead, FlattenRoundTrip) {
  Rng rng(1);
  auto f = random_tensor({3, 4, 5}, rng);
  EXPECT_EQ(f.reshape({12, 5}).reshape({3, 4, 5}).values(), f.values());
}

TEST(GeoParameterCount, MatchesGoldenFile) {
  GeoTr<float> g(GeoConfig{}, 0);
  std::ifstream in(std::string(DOCTR_TEST_DATA_DIR) + "/geotr_default_params.txt");
  ASSERT_TRUE(in) << "missing golden file";
  std::int64_t golden = 0;
  in >> golden;
  EXPECT_EQ(g.params().count(), golden);
}

TEST(Encode, ZeroDepthAddsPositionEmbedding) {
  Rng rng(2);
  auto f = random_tensor({6, 4}, rng);
  auto e = random_tensor({6, 4}, rng);
  const auto out = encode<double>(f, e, {}, 2);
  for (int i = 0; i < 24; ++i) EXPECT_EQ(out.data()[i], f.data()[i] + e.data()[i]);
}

TEST(Encode, PermutationEquivariantWithoutPositionEmbedding) {
  Rng rng(3);
  ParameterSet<double> ps;
  std::vector<EncoderLayer<double>> layers{EncoderLayer<double>::create(ps, "e0", 8, 16, rng),
                                           EncoderLayer<double>::create(ps, "e1", 8, 16, rng)};
  auto f = random_tensor({5, 8}, rng);
  Tensor<double> zero({5, 8}, 0.0);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<double> pf(40);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 8; ++j) pf[i * 8 + j] = f.data()[perm[i] * 8 + j];
  const auto out = encode(f, zero, layers, 2);
  const auto pout = encode(Tensor<double>({5, 8}, pf), zero, layers, 2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(pout.data()[i * 8 + j], out.data()[perm[i] * 8 + j], 1e-12);
}

TEST(Encode, MatchesHandExpandedLayer) {
  Rng rng(4);
  ParameterSet<double> ps;
  std::vector<EncoderLayer<double>> layers{EncoderLayer<double>::create(ps, "e0", 4, 16, rng)};
  for (auto& [n, t] : ps.entries())
    for (auto& v : t.mutable_data()) v = rng.uniform(-1, 1);
  auto f = random_tensor({4, 4}, rng);
  auto e = random_tensor({4, 4}, rng);
  const auto& l = layers[0];
  const naive::Mat f0 = naive::add(naive::from_tensor(f), naive::from_tensor(e));
  const naive::Mat f1 = naive::norm(naive::add(naive::attention(f0, f0, l.attn, 1), f0), l.norm1);
  const naive::Mat expect = naive::norm(naive::add(naive::ffn(f1, l.ffn), f1), l.norm2);
  const auto got = encode(f, e, layers, 1);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(got.data()[i * 4 + j], expect[i][j], kLayerOracleTol);
}

TEST(Decode, MatchesHandExpandedLayerForBothResiduals) {
  Rng rng(5);
  ParameterSet<double> ps;
  std::vector<DecoderLayer<double>> layers{DecoderLayer<double>::create(ps, "d0", 4, 16, rng)};
  for (auto& [n, t] : ps.entries())
    for (auto& v : t.mutable_data()) v = rng.uniform(-1, 1);
  auto fk = random_tensor({4, 4}, rng);
  auto ep = random_tensor({4, 4}, rng);
  auto ed = random_tensor({4, 4}, rng);
  const auto& l = layers[0];
  const naive::Mat y0 = naive::add(naive::from_tensor(ep), naive::from_tensor(ed));
  const naive::Mat k = naive::from_tensor(fk);
  const naive::Mat y1 = naive::norm(naive::add(naive::attention(y0, y0, l.self_attn, 1), y0), l.norm1);
  for (auto mode : {DecoderResidual::Previous, DecoderResidual::AfterSelfAttention}) {
    const naive::Mat& skip = mode == DecoderResidual::Previous ? y0 : y1;
    const naive::Mat y2 = naive::norm(naive::add(naive::attention(y1, k, l.cross_attn, 1), skip), l.norm2);
    const naive::Mat expect = naive::norm(naive::add(naive::ffn(y2, l.ffn), y2), l.norm3);
    const auto got = decode(fk, ep, ed, layers, 1, mode);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(got.data()[i * 4 + j], expect[i][j], kLayerOracleTol);
  }
}

TEST(Decode, ConstantKeysGiveIdenticalCrossAttentionRows) {
  Rng rng(6);
  ParameterSet<double> ps;
  auto p = AttentionParams<double>::create(ps, "x", 4, rng);
  std::vector<double> row{0.3, -0.2, 0.8, 0.1}, fk;
  for (int i = 0; i < 5; ++i) fk.insert(fk.end(), row.begin(), row.end());
  auto q = random_tensor({3, 4}, rng);
  const auto out = multi_head_attention(q, Tensor<double>({5, 4}, fk), Tensor<double>({5, 4}, fk), p, 2);
  for (int i = 1; i < 3; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(out.data()[i * 4 + j], out.data()[j], 1e-12);
}

TEST(Decode, ShapeContractAndErrors) {
  Rng rng(7);
  ParameterSet<double> ps;
  std::vector<DecoderLayer<double>> layers{DecoderLayer<double>::create(ps, "d0", 4, 8, rng)};
  auto fk = random_tensor({9, 4}, rng);
  auto ep = random_tensor({6, 4}, rng);
  auto ed = random_tensor({6, 4}, rng);
  EXPECT_EQ(decode(fk, ep, ed, layers, 2).shape(), (Shape{6, 4}));
  EXPECT_THROW(decode(fk, ep, random_tensor({5, 4}, rng), layers, 2), DimensionError);
  EXPECT_THROW(decode(random_tensor({9, 3}, rng), ep, ed, layers, 2), DimensionError);
}

TEST(GeoTail, DefaultExtentAndMaskNormalization) {
  GeoTr<float> g(GeoConfig{}, 8);
  Rng rng(8);
  NoGradGuard guard;
  auto fd = testkit::random_tensor_f({1296, 512}, rng);
  const auto [coarse, mask] = g.tail_fields(fd);
  EXPECT_EQ(coarse.shape(), (Shape{36, 36, 2}));
  ASSERT_EQ(mask.shape(), (Shape{36, 36, 9, 64}));
  for (int cell = 0; cell < 36 * 36; ++cell)
    for (int k = 0; k < 64; ++k) {
      double s = 0.0;
      for (int n = 0; n < 9; ++n) {
        const float m = mask.data()[(cell * 9 + n) * 64 + k];
        EXPECT_GE(m, 0.0f);
        s += m;
      }
      ASSERT_NEAR(s, 1.0, 1e-6);
    }
  EXPECT_EQ(g.tail(fd).shape(), (Shape{288, 288, 2}));
}

TEST(GeoTail, ConstantCoarseDisplacementIsConstantInInterior) {
  GeoConfig cfg;
  cfg.input_size = 64;
  cfg.c_g = 16;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.head_channels = {4, 4, 8};
  cfg.tail_channels = 8;
  GeoTr<float> g(cfg, 9);
  set_values(g.params(), "geo.tail.flow2.kernel", 0.0f);
  set_values(g.params(), "geo.tail.flow2.bias", 0.125f);
  Rng rng(9);
  NoGradGuard guard;
  const auto map = g.tail(testkit::random_tensor_f({64, 16}, rng));
  const auto id = identity_grid<float>(64, 64);
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x)
      for (int c = 0; c < 2; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * 64 + x) * 2 + c;
        EXPECT_NEAR(map.data()[i] - id.data()[i], 0.125f, 1e-6);
      }
}

TEST(GeoTail, BilinearAblationMatchesResizeOracle) {
  GeoConfig cfg = gradcheck_config();
  cfg.learned_upsample = false;
  GeoTr<double> g(cfg, 10);
  EXPECT_EQ(g.params().find("geo.tail.mask1.kernel"), nullptr);
  Rng rng(10);
  auto fd = random_tensor({4, 8}, rng, -1, 1, false);
  const auto coarse = g.tail_fields(fd).first;
  const auto map = g.tail(fd);
  // Corner-aligned bilinear interpolation of the 2 x 2 coarse field, evaluated directly.
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 2; ++c) {
        const double ty = y / 15.0, tx = x / 15.0;
        auto cv = [&](int i, int j) { return coarse.data()[(i * 2 + j) * 2 + c]; };
        const double v = (1 - ty) * ((1 - tx) * cv(0, 0) + tx * cv(0, 1)) + ty * ((1 - tx) * cv(1, 0) + tx * cv(1, 1));
        const double id = c == 0 ? tx : ty;
        EXPECT_NEAR(map.data()[(y * 16 + x) * 2 + c], id + v, 1e-6);
      }
}

TEST(GeoLoss, ValuesAndErrors) {
  auto a = identity_map(8, 8);
  EXPECT_EQ(geo_loss(a, a), 0.0);
  auto b = a;
  for (auto& u : b.u) u += 0.5f;
  for (auto& v : b.v) v += 0.5f;
  EXPECT_NEAR(geo_loss(a, b), 0.5, 1e-6);
  EXPECT_NEAR(geo_loss(map_to_tensor<double>(a), map_to_tensor<double>(b)).item(), 0.5, 1e-6);
  EXPECT_THROW(geo_loss(Tensor<double>({2, 2, 2}), Tensor<double>({2, 3, 2})), DimensionError);
  EXPECT_THROW(geo_loss(identity_map(2, 2), identity_map(3, 2)), DimensionError);
}

TEST(GeoLoss, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  auto p = random_tensor({4, 4, 2}, rng);
  auto gt = random_tensor({4, 4, 2}, rng, -1, 1, false);
  auto r = grad_check([&] { return geo_loss(p, gt); }, {p});
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(GeoTr, FullForwardGradientMatchesFiniteDifferences) {
  GeoTr<double> g(gradcheck_config(), 12);
  Rng rng(12);
  auto img = random_tensor({16, 16, 3}, rng, 0, 1, false);
  auto gt = random_tensor({16, 16, 2}, rng, 0, 1, false);
  std::vector<Tensor<double>> inputs;
  for (auto& [n, t] : g.params().entries()) inputs.push_back(t);
  auto r = grad_check([&] { return geo_loss(g.forward(img), gt); }, inputs, 1e-6, 6);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
  EXPECT_GT(r.checked, 100u);
}

TEST(GeoTr, AblationVariantsBuildAndRun) {
  for (int variant = 0; variant < 4; ++variant) {
    GeoConfig cfg = gradcheck_config();
    cfg.use_encoder = variant != 1;
    cfg.use_decoder = variant != 2;
    cfg.learned_upsample = variant != 3;
    GeoTr<float> g(cfg, 13);
    NoGradGuard guard;
    const auto y = g.forward(Tensor<float>({16, 16, 3}, 0.5f));
    EXPECT_EQ(y.shape(), (Shape{16, 16, 2}));
    EXPECT_TRUE(all_finite(y));
  }
}

TEST(Unwarp, IdentityStubReturnsInputAtAnyResolution) {
  GeoConfig cfg = gradcheck_config();
  GeoTr<float> g(cfg, 14);
  set_values(g.params(), "geo.tail.flow2.kernel", 0.0f);
  set_values(g.params(), "geo.tail.flow2.bias", 0.0f);
  Rng rng(14);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{37, 23}, std::pair{100, 61}}) {
    const auto img = testkit::random_image(h, w, 3, rng);
    DocMask mask{16, 16, std::vector<std::uint8_t>(256, 1)};
    const auto r = unwarp_masked(img, mask, g);
    EXPECT_EQ(r.rectified, img);
    EXPECT_EQ(r.map.height, h);
    EXPECT_EQ(r.map.width, w);
    const auto r2 = unwarp(img, nullptr, g);
    EXPECT_EQ(r2.rectified, img);
  }
}

TEST(Unwarp, EmptyMaskIsRejected) {
  GeoTr<float> g(gradcheck_config(), 15);
  Image img(20, 20, 3, 0.5f);
  DocMask none{16, 16, std::vector<std::uint8_t>(256, 0)};
  try {
    unwarp_masked(img, none, g);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_STREQ(e.what(), "no document found");
  }
  SegConfig sc;
  sc.input_size = 16;
  sc.c0 = 2;
  sc.c1 = 2;
  sc.c2 = 2;
  Segmenter<float> seg(sc, 1);
  set_values(seg.params(), "seg.out.kernel", 0.0f);
  set_values(seg.params(), "seg.out.bias", -20.0f);
  EXPECT_THROW(unwarp(img, &seg, g), PipelineError);
  set_values(seg.params(), "seg.out.bias", 20.0f);
  EXPECT_NO_THROW(unwarp(img, &seg, g));
}
