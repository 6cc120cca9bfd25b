#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "doctr/numerics/nn.hpp"
#include "doctr/numerics/ops.hpp"
#include "doctr/numerics/optim.hpp"
#include "doctr/numerics/parallel.hpp"
#include "doctr/numerics/rng.hpp"
#include "testing.hpp"

using namespace doctr;
using doctr::testkit::grad_check;
using doctr::testkit::random_tensor;

namespace {

constexpr double kOracleTol = 1e-6;
constexpr double kGradTol = 1e-4;
constexpr double kDeepGradTol = 1e-3;

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, int stride, int pad) {
  const int h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const int kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
  const int ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(ho) * wo * cout, 0.0);
  const auto xd = x.data();
  const auto kd = k.data();
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox)
      for (int co = 0; co < cout; ++co) {
        double s = 0.0;
        for (int dy = 0; dy < kh; ++dy)
          for (int dx = 0; dx < kw; ++dx) {
            const int iy = oy * stride + dy - pad, ix = ox * stride + dx - pad;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            for (int ci = 0; ci < cin; ++ci)
              s += xd[(iy * w + ix) * cin + ci] * kd[((dy * kw + dx) * cin + ci) * cout + co];
          }
        out[(oy * wo + ox) * cout + co] = s;
      }
  return out;
}

}  // namespace

TEST(Tensor, RejectsNonPositiveExtents) {
  EXPECT_THROW(Tensor<float>(Shape{2, 0}), DimensionError);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), DimensionError);
}

TEST(Tensor, ReshapeKeepsGradientPath) {
  Rng rng(1);
  auto x = random_tensor({2, 3}, rng);
  auto r = grad_check([&] { return sum(mul(x.reshape({3, 2}), x.reshape({3, 2}))); }, {x});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor<double>::parameter({3}, {1, 2, 3});
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareHandDerivative) {
  auto x = Tensor<double>::parameter({2}, {1, 2});
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Backward, AccumulatesUntilCleared) {
  auto x = Tensor<double>::parameter({2}, {1, 2});
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
  x.zero_grad();
  sum(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
}

TEST(Backward, NonScalarLossRejected) {
  auto x = Tensor<double>::parameter({2}, {1, 2});
  EXPECT_THROW(mul(x, x).backward(), ArgumentError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = Tensor<double>::parameter({2}, {1, 2});
  Tensor<double> y;
  {
    NoGradGuard g;
    y = mul(x, x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_mode_enabled());
}

TEST(Matmul, IdentityAndScalar) {
  Rng rng(2);
  auto x = random_tensor({3, 3}, rng);
  Tensor<double> eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto y = matmul(eye, x);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
  auto s = matmul(Tensor<double>({1, 1}, {2}), Tensor<double>({1, 1}, {3}));
  EXPECT_EQ(s.item(), 6.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = rng.uniform_int(1, 8), k = rng.uniform_int(1, 8), n = rng.uniform_int(1, 8);
    auto a = random_tensor({m, k}, rng);
    auto b = random_tensor({k, n}, rng);
    const auto ref = naive_matmul(a.values(), b.values(), m, k, n);
    const auto got = matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got.data()[i], ref[i], kOracleTol);
  }
}

TEST(Matmul, TransposedOperandsMatchOracle) {
  Rng rng(4);
  auto a = random_tensor({5, 4}, rng);  // read as 4 x 5
  auto b = random_tensor({3, 5}, rng);  // read as 5 x 3
  std::vector<double> at(20), bt(15);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) at[j * 5 + i] = a.data()[i * 4 + j];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) bt[j * 3 + i] = b.data()[i * 5 + j];
  const auto ref = naive_matmul(at, bt, 4, 5, 3);
  const auto got = matmul(a, b, true, true);
  ASSERT_EQ(got.shape(), (Shape{4, 3}));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got.data()[i], ref[i], kOracleTol);
}

TEST(Matmul, ShapeMismatch) {
  EXPECT_THROW(matmul(Tensor<double>({2, 3}), Tensor<double>({2, 3})), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  auto a = random_tensor({4, 5}, rng);
  auto b = random_tensor({5, 3}, rng);
  auto w = random_tensor({4, 3}, rng, -1, 1, false);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto aa = ta ? random_tensor({5, 4}, rng) : a;
      auto bb = tb ? random_tensor({3, 5}, rng) : b;
      auto r = grad_check([&] { return sum(mul(matmul(aa, bb, ta, tb), w)); }, {aa, bb});
      EXPECT_LT(r.max_rel_error, kGradTol) << ta << tb << " " << r.worst;
    }
  }
}

TEST(Softmax, ConstantInputIsUniform) {
  Tensor<double> x({2, 9}, 3.0);
  auto y = softmax(x, {1});
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
}

TEST(Softmax, LargeEntryGivesOneHot) {
  Tensor<double> x({4}, {0, 1000, 0, 0});
  auto y = softmax(x, {0});
  EXPECT_NEAR(y.data()[1], 1.0, 1e-12);
  EXPECT_NEAR(y.data()[0], 0.0, 1e-12);
}

TEST(Softmax, MatchesDirectFormulaOverMultipleAxes) {
  Rng rng(6);
  auto x = random_tensor({2, 3, 3, 4}, rng, -3, 3);
  auto y = softmax(x, {1, 2});
  for (int a = 0; a < 2; ++a)
    for (int d = 0; d < 4; ++d) {
      double z = 0.0;
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) z += std::exp(x.data()[((a * 3 + b) * 3 + c) * 4 + d]);
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) {
          const std::size_t i = ((a * 3 + b) * 3 + c) * 4 + d;
          EXPECT_NEAR(y.data()[i], std::exp(x.data()[i]) / z, 1e-7);
        }
    }
}

TEST(Softmax, SumsToOneForExtremeInputs) {
  Rng rng(7);
  for (double range : {1.0, 50.0, 500.0}) {
    auto x = random_tensor({5, 9}, rng, -range, range);
    auto y = softmax(x, {1});
    for (int r = 0; r < 5; ++r) {
      double s = 0.0;
      for (int c = 0; c < 9; ++c) {
        const double v = y.data()[r * 9 + c];
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, EmptyAxesRejected) { EXPECT_THROW(softmax(Tensor<double>({3}), {}), ArgumentError); }

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  auto x = random_tensor({2, 3, 4}, rng, -2, 2);
  auto w = random_tensor({2, 3, 4}, rng, -1, 1, false);
  auto r = grad_check([&] { return sum(mul(softmax(x, {0, 2}), w)); }, {x});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(LayerNorm, ConstantVectorGivesZeros) {
  Tensor<double> x({1, 4}, 2.5);
  auto y = layer_norm(x, Tensor<double>({4}, 1.0), Tensor<double>({4}, 0.0));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, HandComputedPair) {
  Tensor<double> x({1, 2}, {1, 3});
  auto y = layer_norm(x, Tensor<double>({2}, 1.0), Tensor<double>({2}, 0.0));
  EXPECT_NEAR(y.data()[0], -1.0, 1e-6);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-6);
}

TEST(LayerNorm, NormalizesEveryPosition) {
  Rng rng(9);
  auto x = random_tensor({6, 16}, rng, -5, 5);
  auto y = layer_norm(x, Tensor<double>({16}, 1.0), Tensor<double>({16}, 0.0));
  for (int r = 0; r < 6; ++r) {
    double m = 0.0, v = 0.0;
    for (int c = 0; c < 16; ++c) m += y.data()[r * 16 + c];
    m /= 16;
    for (int c = 0; c < 16; ++c) v += (y.data()[r * 16 + c] - m) * (y.data()[r * 16 + c] - m);
    v /= 16;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_LT(std::abs(v - 1.0), 1e-4);
  }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  auto x = random_tensor({3, 5}, rng, -2, 2);
  auto g = random_tensor({5}, rng);
  auto b = random_tensor({5}, rng);
  auto w = random_tensor({3, 5}, rng, -1, 1, false);
  auto r = grad_check([&] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(LayerNorm, ChannelMismatch) {
  EXPECT_THROW(layer_norm(Tensor<double>({2, 3}), Tensor<double>({2}), Tensor<double>({2})), DimensionError);
}

TEST(InstanceNorm, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  auto x = random_tensor({4, 3, 2}, rng, -2, 2);
  auto w = random_tensor({4, 3, 2}, rng, -1, 1, false);
  auto r = grad_check([&] { return sum(mul(instance_norm(x), w)); }, {x});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Attention, SingleKeyReturnsProjectedValue) {
  Rng rng(12);
  ParameterSet<double> ps;
  auto p = AttentionParams<double>::create(ps, "att", 8, rng);
  auto q = random_tensor({5, 8}, rng, -1, 1, false);
  auto kv = random_tensor({1, 8}, rng, -1, 1, false);
  auto y = multi_head_attention(q, kv, kv, p, 2);
  const auto expect = p.out(p.v(kv));
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 8; ++c) EXPECT_NEAR(y.data()[r * 8 + c], expect.data()[c], 1e-12);
}

TEST(Attention, MatchesHandExpandedSingleHead) {
  ParameterSet<double> ps;
  AttentionParams<double> p;
  p.q = {ps.add("q.w", {2, 2}, {1.0, 0.5, -0.5, 1.0}), ps.add("q.b", {2}, {0.1, 0.0})};
  p.k = {ps.add("k.w", {2, 2}, {0.3, 0.0, 0.2, 0.7}), ps.add("k.b", {2}, {0.0, -0.2})};
  p.v = {ps.add("v.w", {2, 2}, {2.0, 1.0, 0.0, 1.0}), ps.add("v.b", {2}, {0.0, 0.5})};
  p.out = {ps.add("o.w", {2, 2}, {1.0, 0.0, 1.0, -1.0}), ps.add("o.b", {2}, {0.25, 0.0})};
  const double xq[2][2] = {{1.0, 2.0}, {-1.0, 0.5}};
  const double xk[2][2] = {{0.5, -1.0}, {2.0, 1.0}};
  auto proj = [](const double x[2], double w00, double w01, double w10, double w11, double b0, double b1, double o[2]) {
    o[0] = x[0] * w00 + x[1] * w10 + b0;
    o[1] = x[0] * w01 + x[1] * w11 + b1;
  };
  double q[2][2], k[2][2], v[2][2];
  for (int i = 0; i < 2; ++i) {
    proj(xq[i], 1.0, 0.5, -0.5, 1.0, 0.1, 0.0, q[i]);
    proj(xk[i], 0.3, 0.0, 0.2, 0.7, 0.0, -0.2, k[i]);
    proj(xk[i], 2.0, 1.0, 0.0, 1.0, 0.0, 0.5, v[i]);
  }
  double expect[2][2];
  for (int i = 0; i < 2; ++i) {
    const double s0 = (q[i][0] * k[0][0] + q[i][1] * k[0][1]) / std::sqrt(2.0);
    const double s1 = (q[i][0] * k[1][0] + q[i][1] * k[1][1]) / std::sqrt(2.0);
    const double a0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
    const double a1 = 1.0 - a0;
    const double h[2] = {a0 * v[0][0] + a1 * v[1][0], a0 * v[0][1] + a1 * v[1][1]};
    proj(h, 1.0, 0.0, 1.0, -1.0, 0.25, 0.0, expect[i]);
  }
  Tensor<double> tq({2, 2}, {1.0, 2.0, -1.0, 0.5});
  Tensor<double> tk({2, 2}, {0.5, -1.0, 2.0, 1.0});
  auto y = multi_head_attention(tq, tk, tk, p, 1);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(y.data()[i * 2 + j], expect[i][j], 1e-6);
}

TEST(Attention, DefaultScaleShape) {
  Rng rng(13);
  ParameterSet<float> ps;
  auto p = AttentionParams<float>::create(ps, "att", 512, rng);
  const int ng = (288 / 8) * (288 / 8);
  auto x = testkit::random_tensor_f({ng, 512}, rng);
  NoGradGuard g;
  auto y = multi_head_attention(x, x, x, p, 8);
  EXPECT_EQ(y.shape(), (Shape{1296, 512}));
  EXPECT_TRUE(all_finite(y));
}

TEST(Attention, IndivisibleHeadsRejected) {
  Rng rng(14);
  ParameterSet<double> ps;
  auto p = AttentionParams<double>::create(ps, "att", 6, rng);
  Tensor<double> x({2, 6});
  EXPECT_THROW(multi_head_attention(x, x, x, p, 4), ConfigError);
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  Rng rng(15);
  ParameterSet<double> ps;
  auto p = AttentionParams<double>::create(ps, "att", 4, rng);
  auto q = random_tensor({3, 4}, rng);
  auto kv = random_tensor({5, 4}, rng);
  auto w = random_tensor({3, 4}, rng, -1, 1, false);
  std::vector<Tensor<double>> inputs{q, kv};
  for (auto& [n, t] : ps.entries()) inputs.push_back(t);
  auto r = grad_check([&] { return sum(mul(multi_head_attention(q, kv, kv, p, 2), w)); }, inputs);
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(FeedForward, ZeroWeightsGiveZero) {
  ParameterSet<double> ps;
  FeedForwardParams<double> p{{ps.zeros("a", {3, 12}), ps.zeros("b", {12})}, {ps.zeros("c", {12, 3}), ps.zeros("d", {3})}};
  Rng rng(16);
  auto y = feed_forward(random_tensor({4, 3}, rng), p);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(FeedForward, HandComputedScalar) {
  FeedForwardParams<double> p{{Tensor<double>({1, 1}, 2.0), Tensor<double>({1}, 0.0)},
                              {Tensor<double>({1, 1}, 3.0), Tensor<double>({1}, 1.0)}};
  EXPECT_DOUBLE_EQ(feed_forward(Tensor<double>({1, 1}, 1.0), p).item(), 7.0);
}

TEST(FeedForward, ShapeMismatch) {
  Rng rng(17);
  ParameterSet<double> ps;
  auto p = FeedForwardParams<double>::create(ps, "ffn", 4, 16, rng);
  EXPECT_THROW(feed_forward(Tensor<double>({2, 5}), p), DimensionError);
}

TEST(FeedForward, GradientMatchesFiniteDifferences) {
  Rng rng(18);
  ParameterSet<double> ps;
  auto p = FeedForwardParams<double>::create(ps, "ffn", 3, 12, rng);
  auto x = random_tensor({4, 3}, rng);
  auto w = random_tensor({4, 3}, rng, -1, 1, false);
  std::vector<Tensor<double>> inputs{x};
  for (auto& [n, t] : ps.entries()) inputs.push_back(t);
  auto r = grad_check([&] { return sum(mul(feed_forward(x, p), w)); }, inputs);
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(19);
  auto x = random_tensor({5, 4, 1}, rng, -1, 1, false);
  auto y = conv2d(x, Tensor<double>({1, 1, 1, 1}, 1.0), Tensor<double>(), 1, 0);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, AveragingKernelOnConstantImage) {
  Tensor<double> x({4, 5, 1}, 2.0);
  auto y = conv2d(x, Tensor<double>({3, 3, 1, 1}, 1.0 / 9.0), Tensor<double>(), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{4, 5, 1}));
  EXPECT_NEAR(y.data()[1 * 5 + 2], 2.0, 1e-12);
  EXPECT_NEAR(y.data()[0], 2.0 * 4.0 / 9.0, 1e-12);
  EXPECT_NEAR(y.data()[2], 2.0 * 6.0 / 9.0, 1e-12);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(20);
  auto x = random_tensor({7, 6, 2}, rng);
  auto k = random_tensor({5, 5, 2, 3}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 2}) {
      const auto ref = naive_conv(x, k, stride, pad);
      auto y = conv2d(x, k, Tensor<double>(), stride, pad);
      ASSERT_EQ(static_cast<std::size_t>(y.numel()), ref.size());
      EXPECT_EQ(y.dim(0), (7 + 2 * pad - 5) / stride + 1);
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], kOracleTol);
    }
  }
}

TEST(Conv2d, RejectsOversizedAndEvenKernels) {
  EXPECT_THROW(conv2d(Tensor<double>({2, 2, 1}), Tensor<double>({5, 5, 1, 1}), Tensor<double>(), 1, 0), DimensionError);
  EXPECT_THROW(conv2d(Tensor<double>({4, 4, 1}), Tensor<double>({2, 2, 1, 1}), Tensor<double>(), 1, 0), ArgumentError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  auto x = random_tensor({6, 5, 2}, rng);
  auto k = random_tensor({3, 3, 2, 3}, rng);
  auto b = random_tensor({3}, rng);
  for (int stride : {1, 2}) {
    auto y0 = conv2d(x, k, b, stride, 1);
    auto w = random_tensor(y0.shape(), rng, -1, 1, false);
    auto r = grad_check([&] { return sum(mul(conv2d(x, k, b, stride, 1), w)); }, {x, k, b});
    EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
  }
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(22);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto bias = random_tensor({4}, rng);
  auto m = random_tensor({3}, rng);
  auto r = grad_check(
      [&] {
        auto t = add(mul(sigmoid(a), b), sub(scale(a, 0.5), add_scalar(b, 0.2)));
        t = add_bias(abs(t), bias);
        t = mul_broadcast_last(relu(t), m);
        return add(sum(smooth_clamp01(t)), mean(t));
      },
      {a, b, bias, m});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Elementwise, SmoothClampStaysInsideUnitInterval) {
  Tensor<double> x({5}, {-100.0, -1.0, 0.5, 2.0, 100.0});
  auto y = smooth_clamp01(x);
  for (double v : y.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NEAR(y.data()[2], 0.5, 1e-6);
}

TEST(Indexing, GradientsMatchFiniteDifferences) {
  Rng rng(23);
  auto x = random_tensor({2, 3, 2}, rng);
  auto y = random_tensor({2, 3, 1}, rng);
  auto r = grad_check(
      [&] {
        auto u = upsample_nearest2(concat_last<double>({x, y}));
        auto s = slice_columns(u.reshape({24, 3}), 1, 2);
        auto g = gather(s, {3}, {0, 5, 0});
        return add(sum(mul(s, s)), sum(mul(g, g)));
      },
      {x, y});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Losses, L1AndBceGradients) {
  Rng rng(24);
  auto a = random_tensor({10}, rng);
  auto b = random_tensor({10}, rng, -1, 1, false);
  auto p = random_tensor({10}, rng, 0.05, 0.95);
  Tensor<double> y({10}, {0, 1, 1, 0, 1, 0, 0, 1, 1, 0});
  auto r = grad_check([&] { return add(l1_loss(a, b), add(bce_loss(p, y), bce_loss(p, y, Reduction::Mean))); }, {a, p});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Losses, BceHandValue) {
  EXPECT_NEAR(bce_loss(Tensor<double>({1}, 0.5), Tensor<double>({1}, 1.0)).item(), 0.6931471805599453, 1e-12);
}

TEST(DeepComposition, GradientMatchesFiniteDifferences) {
  Rng rng(25);
  ParameterSet<double> ps;
  auto c1 = Conv<double>::create(ps, "c1", 3, 2, 4, 2, true, rng);
  auto n1 = NormParams<double>::create(ps, "n1", 4);
  auto att = AttentionParams<double>::create(ps, "att", 4, rng);
  auto ffn = FeedForwardParams<double>::create(ps, "ffn", 4, 8, rng);
  auto x = random_tensor({6, 6, 2}, rng);
  std::vector<Tensor<double>> inputs{x};
  for (auto& [n, t] : ps.entries()) inputs.push_back(t);
  auto r = grad_check(
      [&] {
        auto f = instance_norm(c1(x)).reshape({9, 4});
        f = n1(add(f, multi_head_attention(f, f, f, att, 2)));
        f = add(f, feed_forward(f, ffn));
        return mean(mul(f, f));
      },
      inputs);
  EXPECT_LT(r.max_rel_error, kDeepGradTol) << r.worst;
}

TEST(AdamW, ZeroGradientNoDecayLeavesParameters) {
  ParameterSet<double> ps;
  auto p = ps.add("p", {3}, {1, -2, 3});
  p.mutable_grad();
  AdamW<double> opt(ps, {.weight_decay = 0.0});
  for (int i = 0; i < 5; ++i) opt.step(0.1);
  EXPECT_EQ(p.data()[0], 1.0);
  EXPECT_EQ(p.data()[1], -2.0);
  EXPECT_EQ(opt.step_count(), 5);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ParameterSet<double> ps;
  auto p = ps.add("p", {1}, {0.5});
  p.mutable_grad()[0] = 1.0;
  AdamW<double> opt(ps, {.weight_decay = 0.0});
  opt.step(0.1);
  EXPECT_NEAR(p.item(), 0.4, 1e-6);
}

TEST(AdamW, DecayOnlyIsGeometric) {
  ParameterSet<double> ps;
  auto p = ps.add("p", {1}, {2.0});
  AdamW<double> opt(ps, {.weight_decay = 0.01});
  for (int i = 0; i < 10; ++i) {
    p.mutable_grad()[0] = 0.0;
    opt.step(0.5);
  }
  EXPECT_NEAR(p.item(), 2.0 * std::pow(1.0 - 0.5 * 0.01, 10), 1e-12);
}

TEST(AdamW, NanGradientNamesParameter) {
  ParameterSet<double> ps;
  ps.add("ok", {1}, {1.0}).mutable_grad()[0] = 1.0;
  ps.add("bad.weight", {2}, {1.0, 2.0}).mutable_grad()[1] = std::numeric_limits<double>::quiet_NaN();
  AdamW<double> opt(ps);
  try {
    opt.step(0.1);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.weight"), std::string::npos);
  }
  EXPECT_EQ(ps.find("ok")->item(), 1.0);
}

TEST(OneCycle, Endpoints) {
  LrSchedule s;
  EXPECT_DOUBLE_EQ(one_cycle_lr(700, s), 1e-4);
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, s), 1e-4 / 25.0);
  EXPECT_NEAR(one_cycle_lr(2000, s), 1e-4 / 1e4, 1e-20);
  EXPECT_THROW(one_cycle_lr(2001, s), ArgumentError);
  EXPECT_THROW(one_cycle_lr(-1, s), ArgumentError);
}

TEST(OneCycle, PositiveAndNonIncreasingAfterWarmup) {
  LrSchedule s;
  double prev = one_cycle_lr(s.warmup_steps, s);
  for (std::int64_t t = 1; t <= s.total_steps; ++t) {
    const double lr = one_cycle_lr(t, s);
    EXPECT_GT(lr, 0.0);
    if (t > s.warmup_steps) {
      EXPECT_LE(lr, prev);
      prev = lr;
    }
  }
}

TEST(StepDecay, DropsAtBoundary) {
  EXPECT_DOUBLE_EQ(step_decay_lr(19, 1e-4, 0.3, 20), 1e-4);
  EXPECT_NEAR(step_decay_lr(20, 1e-4, 0.3, 20), 3e-5, 1e-18);
}

TEST(Rng, StandardEngineSequence) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, SameSeedSameValues) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.uniform(), b.uniform());
    EXPECT_EQ(a.normal(), b.normal());
  }
  EXPECT_NE(Rng(1).fork(3).next_u64(), Rng(1).fork(4).next_u64());
}

TEST(Rng, NormalMoments) {
  Rng rng(43);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Parallel, EveryIndexOnceAndExceptionsPropagate) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  EXPECT_EQ(std::accumulate(hits.begin(), hits.end(), 0), 1000);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw ArgumentError("boom");
               }),
               ArgumentError);
}

TEST(Determinism, ForwardIsBitIdentical) {
  auto run = [] {
    Rng rng(99);
    ParameterSet<float> ps;
    auto att = AttentionParams<float>::create(ps, "a", 16, rng);
    auto x = testkit::random_tensor_f({10, 16}, rng);
    return multi_head_attention(x, x, x, att, 4).values();
  };
  EXPECT_EQ(run(), run());
}

TEST(AttentionCore, MatchesComposedOps) {
  Rng rng(44);
  auto q = random_tensor({5, 3}, rng, -2, 2);
  auto k = random_tensor({7, 3}, rng, -2, 2);
  auto v = random_tensor({7, 4}, rng);
  const auto fused = attention_core(q, k, v);
  const auto composed = matmul(softmax(matmul(q, k, false, true), {1}), v);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(fused.data()[i], composed.data()[i], 1e-12);
}

TEST(AttentionCore, GradientMatchesFiniteDifferences) {
  Rng rng(45);
  auto q = random_tensor({4, 3}, rng, -2, 2);
  auto k = random_tensor({6, 3}, rng, -2, 2);
  auto v = random_tensor({6, 2}, rng);
  auto w = random_tensor({4, 2}, rng, -1, 1, false);
  auto r = grad_check([&] { return sum(mul(attention_core(q, k, v), w)); }, {q, k, v});
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}
