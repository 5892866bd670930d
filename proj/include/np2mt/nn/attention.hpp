#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "np2mt/numerics/ops.hpp"
#include "np2mt/numerics/parameters.hpp"
#include "np2mt/numerics/random.hpp"

namespace np2mt::nn {

// Additive mask value for disallowed positions; exp() of it is exactly zero
// in both precisions while keeping every tensor finite.
template <typename T>
constexpr T kMaskValue = T(-1e30);

struct AttentionParams {
  ParamId query = 0;   // (d, d)
  ParamId key = 0;     // (d, d)
  ParamId value = 0;   // (d, d)
  ParamId output = 0;  // (d, d)
  std::size_t width = 0;
  std::size_t heads = 1;
};

template <typename T>
AttentionParams make_attention(ParameterStore<T>& store, const std::string& name,
                               std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0)
    throw std::invalid_argument("attention width " + std::to_string(width) +
                                " not divisible by " + std::to_string(heads) + " heads");
  AttentionParams p;
  p.width = width;
  p.heads = heads;
  p.query = store.add_glorot(name + ".w_q", width, width, rng);
  p.key = store.add_glorot(name + ".w_k", width, width, rng);
  p.value = store.add_glorot(name + ".w_v", width, width, rng);
  p.output = store.add_glorot(name + ".w_o", width, width, rng);
  return p;
}

/// Mask with kMaskValue strictly above the diagonal.
template <typename T>
Tensor<T> causal_mask(std::size_t queries, std::size_t keys) {
  Tensor<T> m(Shape{queries, keys});
  for (std::size_t q = 0; q < queries; ++q)
    for (std::size_t k = q + 1; k < keys; ++k) m(q, k) = kMaskValue<T>;
  return m;
}

/// Scaled dot-product multi-head attention of `queries` (n, d) over
/// `memory` (m, d). When `weights_out` is given it receives one (n, m)
/// weight matrix per head.
template <typename T, typename Store>
Var<T> multi_head_attention(Tape<T>& tape, Store& store, const AttentionParams& p,
                            const Var<T>& queries, const Var<T>& memory, bool causal,
                            T dropout_rate = T(0), bool train = false, Rng* rng = nullptr,
                            std::vector<Var<T>>* weights_out = nullptr) {
  if (queries.cols() != p.width || memory.cols() != p.width)
    throw ShapeError("attention: operand width mismatch");
  const std::size_t head_dim = p.width / p.heads;
  Var<T> q = matmul(queries, tape.param(store, p.query));
  Var<T> k = matmul(memory, tape.param(store, p.key));
  Var<T> v = matmul(memory, tape.param(store, p.value));
  Var<T> mask;
  if (causal) mask = tape.constant(causal_mask<T>(queries.rows(), memory.rows()));
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  std::vector<Var<T>> heads;
  for (std::size_t h = 0; h < p.heads; ++h) {
    Var<T> qh = slice_cols(q, h * head_dim, head_dim);
    Var<T> kh = slice_cols(k, h * head_dim, head_dim);
    Var<T> vh = slice_cols(v, h * head_dim, head_dim);
    Var<T> scores = scale(matmul_nt(qh, kh), inv_scale);
    if (causal) scores = add(scores, mask);
    Var<T> w = softmax_rows(scores);
    if (weights_out) weights_out->push_back(w);
    w = dropout(w, dropout_rate, train, rng);
    heads.push_back(matmul(w, vh));
  }
  Var<T> joined = p.heads == 1 ? heads.front() : concat_cols(heads);
  return matmul(joined, tape.param(store, p.output));
}

}  // namespace np2mt::nn
