#pragma once

#include <cmath>
#include <cstddef>
#include <iostream>
#include <stdexcept>
#include <vector>

#include "np2mt/numerics/parameters.hpp"

namespace np2mt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  bool decoupled = false;  // AdamW-style decay instead of L2 through the gradient
};

template <typename T>
struct OptimizerState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Tensor<T>> first;   // mirrors the parameter store
  std::vector<Tensor<T>> second;

  OptimizerState() = default;
  OptimizerState(const ParameterStore<T>& store, AdamConfig c) : config(c) {
    for (const auto& p : store) {
      first.emplace_back(p.value.shape());
      second.emplace_back(p.value.shape());
    }
  }
};

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
template <typename T>
T clip_grad_norm(ParameterStore<T>& store, T max_norm) {
  const T norm = store.grad_norm();
  if (norm > max_norm && norm > T(0)) store.scale_grad(max_norm / norm);
  return norm;
}

/// One Adam update with bias correction from the store's gradients.
/// Non-finite gradients throw when `verify` is set; otherwise the update is
/// skipped with a warning and false is returned.
template <typename T>
bool adam_step(OptimizerState<T>& state, ParameterStore<T>& store, double lr, bool verify = false,
               std::ostream* warnings = &std::cerr) {
  if (state.first.size() != store.size()) throw ShapeError("optimizer state does not match store");
  for (std::size_t i = 0; i < store.size(); ++i)
    if (state.first[i].shape() != store[i].value.shape() ||
        store[i].grad.shape() != store[i].value.shape())
      throw ShapeError("optimizer state shape mismatch for " + store[i].name);
  if (!store.grads_finite()) {
    if (verify) throw NumericError("non-finite gradient");
    if (warnings) *warnings << "warning: non-finite gradient, update skipped\n";
    return false;
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    T* m = state.first[i].data();
    T* v = state.second[i].data();
    T* w = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      double grad = static_cast<double>(g[j]);
      if (!c.decoupled) grad += c.weight_decay * static_cast<double>(w[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * grad;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * grad * grad;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      double update = (mj / correct1) / (std::sqrt(vj / correct2) + c.epsilon);
      if (c.decoupled) update += c.weight_decay * static_cast<double>(w[j]);
      w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * update);
    }
  }
  return true;
}

}  // namespace np2mt
