#pragma once

// Plain loop implementations used as independent oracles for the transformer layers.

#include <vector>

#include "doctr/numerics/nn.hpp"

namespace doctr::naive {

using Mat = std::vector<std::vector<double>>;

Mat from_tensor(const Tensor<double>& t);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat add(const Mat& a, const Mat& b);
Mat add_row(const Mat& a, const std::vector<double>& b);
Mat relu(const Mat& a);
Mat softmax_rows(const Mat& a);
Mat layer_norm(const Mat& a, const std::vector<double>& gain, const std::vector<double>& bias, double eps = 1e-6);
Mat linear(const Mat& x, const Linear<double>& l);
/// One head at a time: softmax(Q_h K_h^T / sqrt(c_w)) V_h, heads concatenated, output-projected.
Mat attention(const Mat& q, const Mat& kv, const AttentionParams<double>& p, int heads);
Mat ffn(const Mat& x, const FeedForwardParams<double>& p);
Mat norm(const Mat& x, const NormParams<double>& p);

}  // namespace doctr::naive
