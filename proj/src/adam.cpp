#include "pss/adam.hpp"

#include <cmath>

namespace pss {

AdamState::AdamState(std::span<const Tensor> params, AdamConfig cfg) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(p.numel(), 0.0f);
    v.emplace_back(p.numel(), 0.0f);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.m.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                         std::to_string(params.size()));
  }
  ++state.t;
  const auto& c = state.config;
  const double t = static_cast<double>(state.t);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta2), t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.numel()) throw DimensionError("adam_step: moment size mismatch for parameter " + std::to_string(k));
    const bool has_grad = p.has_grad();
    float* w = p.ptr();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const float g = has_grad ? p.grad()[i] : 0.0f;
      m[i] = c.beta1 * m[i] + (1.0f - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0f - c.beta2) * g * g;
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

void zero_grads(std::span<Tensor> params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace pss
