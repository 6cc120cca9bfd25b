#include "testing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace doctr::testkit {

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo, double hi, bool param) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return param ? Tensor<double>::parameter(shape, std::move(v)) : Tensor<double>(shape, std::move(v));
}

Tensor<float> random_tensor_f(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<float> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor<float>(shape, std::move(v));
}

Image random_image(int h, int w, int c, Rng& rng) {
  Image img(h, w, c);
  for (auto& x : img.data) x = static_cast<float>(rng.uniform());
  return img;
}

Image textured_image(int h, int w, Rng& rng) {
  Image img(h, w, 1);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 6; ++i) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double freq = rng.uniform(0.15, 0.45);
    waves.push_back({freq * std::cos(angle), freq * std::sin(angle), rng.uniform(0.0, 6.28), rng.uniform(0.5, 1.0)});
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0, norm = 0.0;
      for (const auto& wv : waves) {
        s += wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.phase);
        norm += wv.amp;
      }
      const double v = 0.5 + 0.4 * s / norm + 0.05 * (rng.uniform() - 0.5);
      img.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                           double step, std::size_t samples_per_tensor, std::uint64_t seed, double floor) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    if (analytic.back().empty()) analytic.back().assign(static_cast<std::size_t>(t.numel()), 0.0);
  }
  GradCheckResult r;
  Rng rng(seed);
  NoGradGuard guard;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto data = inputs[ti].mutable_data();
    std::vector<std::size_t> idx;
    if (samples_per_tensor == 0 || samples_per_tensor >= data.size()) {
      for (std::size_t i = 0; i < data.size(); ++i) idx.push_back(i);
    } else {
      for (std::size_t s = 0; s < samples_per_tensor; ++s) {
        idx.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(data.size()) - 1)));
      }
    }
    for (const auto i : idx) {
      const double orig = data[i];
      data[i] = orig + step;
      const double fp = loss().item();
      data[i] = orig - step;
      const double fm = loss().item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[ti][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = std::to_string(ti) + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                  std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace doctr::testkit
