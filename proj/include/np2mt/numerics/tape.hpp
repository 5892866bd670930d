#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "np2mt/numerics/parameters.hpp"
#include "np2mt/numerics/tensor.hpp"

namespace np2mt {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  T item() const { return value().item(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct TapeOptions {
  bool grad_enabled = true;
  // Verification mode: every recorded value must be finite.
  bool check_finite = false;
};

/// Reverse-mode recorder. Nodes are appended in evaluation order, so reverse
/// iteration visits every node after all of its consumers.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  explicit Tape(TapeOptions options) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const TapeOptions& options() const { return options_; }
  bool grad_enabled() const { return options_.grad_enabled; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) {
    check("constant", value);
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    return Var<T>(this, nodes_.size() - 1);
  }

  // The referenced tensor must outlive the tape.
  Var<T> constant_ref(const Tensor<T>& value) {
    Node& n = nodes_.emplace_back();
    n.ref = &value;
    return Var<T>(this, nodes_.size() - 1);
  }

  // Free variable whose gradient is read back with grad().
  Var<T> leaf(Tensor<T> value) {
    check("leaf", value);
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.needs_grad = options_.grad_enabled;
    return Var<T>(this, nodes_.size() - 1);
  }

  // One leaf per (store, id) per tape; backward() adds its gradient into
  // the store.
  Var<T> param(ParameterStore<T>& store, ParamId id) {
    auto key = std::make_pair(static_cast<const void*>(&store), id);
    if (auto it = param_nodes_.find(key); it != param_nodes_.end())
      return Var<T>(this, it->second);
    Node& n = nodes_.emplace_back();
    n.ref = &store[id].value;
    if (options_.grad_enabled) {
      n.needs_grad = true;
      n.param = &store[id];
    }
    param_nodes_.emplace(key, nodes_.size() - 1);
    return Var<T>(this, nodes_.size() - 1);
  }

  // Read-only use of a store; only allowed when gradients are disabled.
  Var<T> param(const ParameterStore<T>& store, ParamId id) {
    if (options_.grad_enabled)
      throw std::logic_error("const parameter use on a gradient tape");
    auto key = std::make_pair(static_cast<const void*>(&store), id);
    if (auto it = param_nodes_.find(key); it != param_nodes_.end())
      return Var<T>(this, it->second);
    Node& n = nodes_.emplace_back();
    n.ref = &store[id].value;
    param_nodes_.emplace(key, nodes_.size() - 1);
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> record(const char* op, Tensor<T> value,
                std::initializer_list<Var<T>> inputs, Backward backward) {
    return record_impl(op, std::move(value), inputs.begin(), inputs.end(),
                       std::move(backward));
  }

  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> inputs,
                Backward backward) {
    return record_impl(op, std::move(value), inputs.begin(), inputs.end(),
                       std::move(backward));
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer of a node, allocated on first touch.
  Tensor<T>& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
    return n.grad;
  }

  const Tensor<T>& grad(const Var<T>& v) {
    if (&v.tape() != this) throw std::logic_error("variable from another tape");
    return grad_ref(v.id());
  }

  void backward(const Var<T>& loss) {
    if (!options_.grad_enabled)
      throw std::logic_error("backward on a tape with gradients disabled");
    if (&loss.tape() != this) throw std::logic_error("loss from another tape");
    if (loss.value().size() != 1)
      throw ShapeError("backward needs a scalar loss, got " +
                       shape_string(loss.value().shape()));
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad_ref(loss.id())[0] = T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  template <typename It>
  Var<T> record_impl(const char* op, Tensor<T> value, It first, It last,
                     Backward backward) {
    check(op, value);
    bool needs = false;
    for (It it = first; it != last; ++it) {
      if (&it->tape() != this)
        throw std::logic_error(std::string(op) + ": operand from another tape");
      needs = needs || nodes_[it->id()].needs_grad;
    }
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    if (needs && options_.grad_enabled) {
      n.needs_grad = true;
      n.backward = std::move(backward);
    }
    return Var<T>(this, nodes_.size() - 1);
  }

  void check(const char* op, const Tensor<T>& value) const {
    if (options_.check_finite && !value.all_finite())
      throw NumericError(std::string("non-finite value produced by ") + op);
  }

  TapeOptions options_;
  std::deque<Node> nodes_;
  std::map<std::pair<const void*, ParamId>, std::size_t> param_nodes_;
};

}  // namespace np2mt
