#pragma once

#include <cstdint>
#include <vector>

#include "doctr/numerics/nn.hpp"

namespace doctr {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled weight decay Adam over every tensor of a ParameterSet.
template <typename T>
class AdamW {
 public:
  AdamW(ParameterSet<T>& params, AdamWOptions options = {});

  /// One update with learning rate `lr`. Throws TrainingError naming the first
  /// parameter whose gradient is not finite; parameters are left untouched then.
  void step(double lr);

  std::int64_t step_count() const { return step_; }
  const AdamWOptions& options() const { return options_; }

  // Moment buffers, in parameter registration order; exposed for checkpointing.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_step_count(std::int64_t step) { step_ = step; }

 private:
  ParameterSet<T>* params_;
  AdamWOptions options_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

struct LrSchedule {
  double max_lr = 1e-4;
  std::int64_t warmup_steps = 700;
  std::int64_t total_steps = 2000;
};

/// Linear warm-up from max/25 to max over warmup_steps, then cosine decay to max/1e4
/// at total_steps.
double one_cycle_lr(std::int64_t step, const LrSchedule& schedule);

/// base * factor^(number of boundaries passed), for the epoch-step recipes.
double step_decay_lr(std::int64_t epoch, double base_lr, double factor, std::int64_t boundary_epoch);

}  // namespace doctr
