#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "doctr/image.hpp"
#include "doctr/numerics/rng.hpp"
#include "doctr/numerics/tensor.hpp"

namespace doctr::testkit {

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool param = true);
Tensor<float> random_tensor_f(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);
Image random_image(int h, int w, int c, Rng& rng);
/// Smooth random texture: sum of a few oriented sinusoids plus noise, in [0, 1].
Image textured_image(int h, int w, Rng& rng);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor index>[<element>]"
  std::size_t checked = 0;
};

/// Compares backward() against central differences of `loss` for every element
/// of every tensor in `inputs` (or `samples_per_tensor` random elements of each
/// when non-zero). Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                           double step = 1e-6, std::size_t samples_per_tensor = 0, std::uint64_t seed = 7,
                           double floor = 1e-3);

}  // namespace doctr::testkit
