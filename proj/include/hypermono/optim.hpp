#pragma once

#include <cstddef>
#include <vector>

#include "hypermono/tensor.hpp"

namespace hypermono::ad {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Linear warm-up to `peak` over warmup_steps, then half-cosine down to
// `floor` at total_steps.
struct LrSchedule {
  double peak = 6e-4;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
  double floor = 0.0;
};

double lr_at(std::size_t step, const LrSchedule& schedule);

// AdamW with decoupled weight decay: the decay term scales the weights
// directly and never enters the moment estimates.
class AdamW {
 public:
  AdamW(ParameterStore& params, AdamWConfig config);

  // Applies one update from the gradients currently held by the parameters.
  void step(double lr);

  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }

  // Moment buffers are exposed for checkpointing, aligned with the store.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_step_count(std::size_t s) { step_ = s; }

 private:
  ParameterStore* params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_ = 0;
};

}  // namespace hypermono::ad
