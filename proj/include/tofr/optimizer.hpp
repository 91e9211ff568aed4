#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tofr {

struct RmsPropSettings {
  double decay = 0.9;       // rho
  double momentum = 0.5;    // mu
  double epsilon = 1e-8;
  double learning_rate = 3e-4;

  friend bool operator==(const RmsPropSettings&, const RmsPropSettings&) = default;
};

/// Per-parameter-tensor state, laid out in the network's parameter order.
struct OptimizerState {
  RmsPropSettings settings;
  std::vector<std::vector<float>> accumulator;  // running mean of g^2, >= 0
  std::vector<std::vector<float>> velocity;     // momentum buffer
  std::uint64_t steps = 0;

  static OptimizerState zeros(std::span<const std::size_t> sizes, RmsPropSettings settings);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct ParamSlot {
  std::span<float> values;
  std::span<const float> grads;
};

/// One RMSProp step with classical momentum on the scaled update:
///   acc <- rho*acc + (1-rho)*g^2
///   buf <- mu*buf + lr*g/(sqrt(acc)+eps)
///   p   <- p - buf
/// Throws TrainingError (with `step_index`) on a non-finite gradient before
/// touching any parameter.
void rmsprop_step(std::span<const ParamSlot> params, OptimizerState& state,
                  std::uint64_t step_index);

}  // namespace tofr
