#include "doctr/numerics/optim.hpp"

#include <cmath>
#include <numbers>

namespace doctr {

template <typename T>
AdamW<T>::AdamW(ParameterSet<T>& params, AdamWOptions options) : params_(&params), options_(options) {
  for (const auto& [name, t] : params.entries()) {
    m_.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  if (!(lr > 0.0)) throw ArgumentError("AdamW: learning rate must be positive");
  auto& entries = params_->entries();
  for (const auto& [name, t] : entries) {
    if (!t.has_grad()) continue;
    for (T g : t.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + name);
    }
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const T decay = static_cast<T>(1.0 - lr * options_.weight_decay);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].second;
    auto p = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has = t.has_grad();
    std::span<const T> g = has ? t.grad() : std::span<const T>{};
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T gj = has ? g[j] : T(0);
      p[j] *= decay;
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * gj);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * gj * gj);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

double one_cycle_lr(std::int64_t step, const LrSchedule& s) {
  if (s.warmup_steps < 1 || s.total_steps < 1 || s.max_lr <= 0.0) throw ArgumentError("one_cycle_lr: invalid schedule");
  if (step < 0 || step > s.total_steps) {
    throw ArgumentError("one_cycle_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(s.total_steps) + "]");
  }
  const double start = s.max_lr / 25.0;
  const double end = s.max_lr / 1e4;
  if (step <= s.warmup_steps) {
    return start + (s.max_lr - start) * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double t = static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  return end + (s.max_lr - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

double step_decay_lr(std::int64_t epoch, double base_lr, double factor, std::int64_t boundary_epoch) {
  if (boundary_epoch <= 0) return base_lr;
  return base_lr * std::pow(factor, static_cast<double>(epoch / boundary_epoch));
}

}  // namespace doctr
