#pragma once

#include <vector>

#include "sketchnet/tensor.hpp"

namespace sketchnet {

/// Momentum SGD state. One velocity tensor per parameter tensor.
template <typename T>
struct OptimState {
  std::vector<Tensor<T>> velocity;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum*v - lr*(g + wd*w);  w <- w + v.
/// Velocity is lazily created with zeros on the first call.
template <typename T>
void sgd_step(std::vector<Tensor<T>*> params, const std::vector<const Tensor<T>*>& grads,
              OptimState<T>& state) {
  if (params.size() != grads.size())
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  if (state.velocity.empty())
    for (const auto* p : params) state.velocity.emplace_back(p->shape());
  if (state.velocity.size() != params.size())
    throw ShapeError("sgd_step: optimizer state tracks " + std::to_string(state.velocity.size()) +
                     " tensors, got " + std::to_string(params.size()));

  const T lr = static_cast<T>(state.learning_rate);
  const T mom = static_cast<T>(state.momentum);
  const T wd = static_cast<T>(state.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = *params[i];
    const Tensor<T>& g = *grads[i];
    Tensor<T>& v = state.velocity[i];
    require_same_shape(w.shape(), g.shape(), "sgd_step gradient");
    require_same_shape(w.shape(), v.shape(), "sgd_step velocity");
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = mom * v[j] - lr * (g[j] + wd * w[j]);
      w[j] += v[j];
    }
  }
}

}  // namespace sketchnet
