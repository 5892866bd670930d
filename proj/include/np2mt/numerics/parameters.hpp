#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/numerics/random.hpp"
#include "np2mt/numerics/tensor.hpp"

namespace np2mt {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

using ParamId = std::size_t;

/// Owns every trainable tensor of a model. Blocks refer to their weights by
/// ParamId, so copying a store copies the whole model.
template <typename T>
class ParameterStore {
 public:
  ParamId add(const std::string& name, Tensor<T> init) {
    if (index_.count(name))
      throw std::invalid_argument("parameter registered twice: " + name);
    Tensor<T> grad(init.shape());
    params_.push_back({name, std::move(init), std::move(grad)});
    index_.emplace(name, params_.size() - 1);
    return params_.size() - 1;
  }

  ParamId add_uniform(const std::string& name, Shape shape, T range, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-range, range));
    return add(name, std::move(t));
  }

  /// Uniform in +-sqrt(6 / (rows + cols)) for a (rows, cols) matrix.
  ParamId add_glorot(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
    const T range = static_cast<T>(std::sqrt(6.0 / static_cast<double>(rows + cols)));
    return add_uniform(name, {rows, cols}, range, rng);
  }

  ParamId add_constant(const std::string& name, Shape shape, T value) {
    return add(name, Tensor<T>(std::move(shape), value));
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](ParamId id) { return params_.at(id); }
  const Parameter<T>& operator[](ParamId id) const { return params_.at(id); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  ParamId id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  T grad_norm() const {
    long double s = 0;
    for (const auto& p : params_)
      for (T g : p.grad.values()) s += static_cast<long double>(g) * g;
    return static_cast<T>(std::sqrt(s));
  }

  void scale_grad(T factor) {
    for (auto& p : params_)
      for (T& g : p.grad.values()) g *= factor;
  }

  bool grads_finite() const {
    for (const auto& p : params_)
      if (!p.grad.all_finite()) return false;
    return true;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, ParamId> index_;
};

}  // namespace np2mt
