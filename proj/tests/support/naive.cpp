#include "naive.hpp"

#include <cmath>

namespace doctr::naive {

Mat from_tensor(const Tensor<double>& t) {
  const auto r = static_cast<std::size_t>(t.dim(0)), c = static_cast<std::size_t>(t.numel()) / r;
  Mat m(r, std::vector<double>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i][j] = t.data()[i * c + j];
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) c[i][j] += b[i][j];
  return c;
}

Mat add_row(const Mat& a, const std::vector<double>& b) {
  Mat c = a;
  for (auto& row : c)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  return c;
}

Mat relu(const Mat& a) {
  Mat c = a;
  for (auto& row : c)
    for (auto& v : row) v = v > 0 ? v : 0.0;
  return c;
}

Mat softmax_rows(const Mat& a) {
  Mat c = a;
  for (auto& row : c) {
    double z = 0.0;
    for (auto v : row) z += std::exp(v);
    for (auto& v : row) v = std::exp(v) / z;
  }
  return c;
}

Mat layer_norm(const Mat& a, const std::vector<double>& gain, const std::vector<double>& bias, double eps) {
  Mat c = a;
  for (auto& row : c) {
    double m = 0.0, var = 0.0;
    for (auto v : row) m += v;
    m /= static_cast<double>(row.size());
    for (auto v : row) var += (v - m) * (v - m);
    var /= static_cast<double>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - m) / std::sqrt(var + eps) * gain[j] + bias[j];
  }
  return c;
}

Mat linear(const Mat& x, const Linear<double>& l) {
  return add_row(matmul(x, from_tensor(l.weight)), l.bias.values());
}

Mat attention(const Mat& q, const Mat& kv, const AttentionParams<double>& p, int heads) {
  const Mat qq = linear(q, p.q), kk = linear(kv, p.k), vv = linear(kv, p.v);
  const std::size_t c = qq[0].size(), cw = c / static_cast<std::size_t>(heads);
  Mat joined(q.size(), std::vector<double>(c, 0.0));
  for (int h = 0; h < heads; ++h) {
    Mat qh(q.size(), std::vector<double>(cw)), kh(kv.size(), std::vector<double>(cw)), vh = kh;
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t j = 0; j < cw; ++j) qh[i][j] = qq[i][h * cw + j];
    for (std::size_t i = 0; i < kv.size(); ++i)
      for (std::size_t j = 0; j < cw; ++j) {
        kh[i][j] = kk[i][h * cw + j];
        vh[i][j] = vv[i][h * cw + j];
      }
    Mat s = matmul(qh, transpose(kh));
    for (auto& row : s)
      for (auto& v : row) v /= std::sqrt(static_cast<double>(cw));
    const Mat o = matmul(softmax_rows(s), vh);
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t j = 0; j < cw; ++j) joined[i][h * cw + j] = o[i][j];
  }
  return linear(joined, p.out);
}

Mat ffn(const Mat& x, const FeedForwardParams<double>& p) { return linear(relu(linear(x, p.in)), p.out); }

Mat norm(const Mat& x, const NormParams<double>& p) { return layer_norm(x, p.gain.values(), p.bias.values()); }

}  // namespace doctr::naive
