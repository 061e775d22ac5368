#include "hypermono/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hypermono/errors.hpp"

namespace hypermono::ad {

double lr_at(std::size_t step, const LrSchedule& s) {
  if (s.warmup_steps >= s.total_steps && s.total_steps > 0 && s.warmup_steps > 0)
    throw ArgumentError("warm-up steps must be smaller than total steps");
  if (step < s.warmup_steps)
    return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  const double span = static_cast<double>(s.total_steps - s.warmup_steps);
  const double progress =
      span <= 0 ? 1.0 : std::clamp(static_cast<double>(step - s.warmup_steps) / span, 0.0, 1.0);
  return s.floor + (s.peak - s.floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(ParameterStore& params, AdamWConfig config) : params_(&params), config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step(double lr) {
  if (m_.size() != params_->size()) throw ArgumentError("optimizer state does not match parameter store");
  for (std::size_t i = 0; i < params_->size(); ++i)
    if (!(*params_)[i].grad.all_finite())
      throw NumericError("non-finite gradient in parameter '" + (*params_)[i].name + "'");

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_->size(); ++i) {
    Parameter& p = (*params_)[i];
    auto w = p.value.data().array();
    const auto g = p.grad.data().array();
    auto m = m_[i].data().array();
    auto v = v_[i].data().array();
    if (config_.weight_decay != 0.0) w *= (1.0 - lr * config_.weight_decay);
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    w -= lr * (m / c1) / ((v / c2).sqrt() + config_.eps);
  }
}

}  // namespace hypermono::ad
