#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pss/tensor.hpp"

namespace pss {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Moment estimates for a fixed list of parameters. m[i] / v[i] mirror the
/// i-th parameter passed to adam_step.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t t = 0;

  AdamState() = default;
  AdamState(std::span<const Tensor> params, AdamConfig cfg);
};

/// One bias-corrected Adam update using each parameter's accumulated gradient
/// (a parameter without a gradient is treated as having a zero gradient).
void adam_step(std::span<Tensor> params, AdamState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace pss
