#include "tofr/optimizer.hpp"

#include <cmath>
#include <string>

#include "tofr/errors.hpp"

namespace tofr {

OptimizerState OptimizerState::zeros(std::span<const std::size_t> sizes, RmsPropSettings settings) {
  OptimizerState s;
  s.settings = settings;
  for (std::size_t n : sizes) {
    s.accumulator.emplace_back(n, 0.0f);
    s.velocity.emplace_back(n, 0.0f);
  }
  return s;
}

void rmsprop_step(std::span<const ParamSlot> params, OptimizerState& state,
                  std::uint64_t step_index) {
  if (params.size() != state.accumulator.size() || params.size() != state.velocity.size()) {
    throw Error(ErrorKind::kConfig, "rmsprop: " + std::to_string(params.size()) +
                                        " parameter tensors but state holds " +
                                        std::to_string(state.accumulator.size()));
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& slot = params[t];
    if (slot.values.size() != slot.grads.size() ||
        slot.values.size() != state.accumulator[t].size() ||
        slot.values.size() != state.velocity[t].size()) {
      throw Error(ErrorKind::kConfig,
                  "rmsprop: buffer size mismatch for parameter tensor " + std::to_string(t));
    }
    for (float g : slot.grads) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient at step " + std::to_string(step_index),
                            step_index, "");
      }
    }
  }

  const float rho = static_cast<float>(state.settings.decay);
  const float mu = static_cast<float>(state.settings.momentum);
  const float eps = static_cast<float>(state.settings.epsilon);
  const float lr = static_cast<float>(state.settings.learning_rate);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].values;
    auto grads = params[t].grads;
    auto& acc = state.accumulator[t];
    auto& vel = state.velocity[t];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float g = grads[i];
      acc[i] = rho * acc[i] + (1.0f - rho) * g * g;
      const float step = lr * g / (std::sqrt(acc[i]) + eps);
      vel[i] = mu * vel[i] + step;
      values[i] -= vel[i];
    }
  }
  ++state.steps;
}

}  // namespace tofr
