#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "np2mt/numerics/ops.hpp"
#include "np2mt/numerics/parameters.hpp"
#include "np2mt/numerics/tape.hpp"

namespace np2mt {

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

namespace detail {

inline double relative_gap(double ad, double fd) {
  return std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
}

inline void check_step(double step) {
  if (!(step >= 1e-6 && step <= 1e-4))
    throw std::invalid_argument("gradient_check step must lie in [1e-6, 1e-4]");
}

template <typename T>
void require_scalar(const Var<T>& y) {
  if (y.value().size() != 1)
    throw ShapeError("gradient_check: function output is not scalar " +
                     shape_string(y.value().shape()));
}

}  // namespace detail

/// Compares reverse-mode gradients of a scalar function of one tensor
/// against central differences, coordinate by coordinate.
template <typename T>
GradientCheckResult gradient_check(
    const std::function<Var<T>(Tape<T>&, const Var<T>&)>& f,
    const Tensor<T>& point, double step = 1e-5) {
  detail::check_step(step);
  Tensor<T> analytic;
  {
    Tape<T> tape(TapeOptions{.grad_enabled = true, .check_finite = true});
    Var<T> x = tape.leaf(point);
    Var<T> y = f(tape, x);
    detail::require_scalar(y);
    tape.backward(y);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor<T>& at) {
    Tape<T> tape(TapeOptions{.grad_enabled = false, .check_finite = true});
    Var<T> x = tape.constant(at);
    return static_cast<double>(f(tape, x).item());
  };
  GradientCheckResult result;
  result.coordinates = point.size();
  Tensor<T> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + static_cast<T>(step);
    const double up = eval(probe);
    probe[i] = point[i] - static_cast<T>(step);
    const double down = eval(probe);
    probe[i] = point[i];
    const double fd = (up - down) / (2.0 * step);
    const double gap = detail::relative_gap(static_cast<double>(analytic[i]), fd);
    if (gap > result.max_relative_error) {
      result.max_relative_error = gap;
      result.worst_index = i;
    }
  }
  return result;
}

/// Same check over every scalar of a parameter store. `loss` must build its
/// graph from `store` on the given tape.
template <typename T>
GradientCheckResult gradient_check_params(
    const std::function<Var<T>(Tape<T>&, ParameterStore<T>&)>& loss,
    ParameterStore<T>& store, double step = 1e-5) {
  detail::check_step(step);
  store.zero_grad();
  {
    Tape<T> tape(TapeOptions{.grad_enabled = true, .check_finite = true});
    Var<T> y = loss(tape, store);
    detail::require_scalar(y);
    tape.backward(y);
  }
  auto eval = [&]() {
    Tape<T> tape(TapeOptions{.grad_enabled = true, .check_finite = true});
    return static_cast<double>(loss(tape, store).item());
  };
  GradientCheckResult result;
  std::size_t flat = 0;
  for (auto& p : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i, ++flat) {
      const T orig = p.value[i];
      p.value[i] = orig + static_cast<T>(step);
      const double up = eval();
      p.value[i] = orig - static_cast<T>(step);
      const double down = eval();
      p.value[i] = orig;
      const double fd = (up - down) / (2.0 * step);
      const double gap = detail::relative_gap(static_cast<double>(p.grad[i]), fd);
      if (gap > result.max_relative_error) {
        result.max_relative_error = gap;
        result.worst_index = flat;
      }
    }
  }
  result.coordinates = flat;
  return result;
}

}  // namespace np2mt
