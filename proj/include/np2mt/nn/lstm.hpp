#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "np2mt/numerics/ops.hpp"
#include "np2mt/numerics/parameters.hpp"
#include "np2mt/numerics/random.hpp"

namespace np2mt::nn {

// Gate blocks are laid out [input | forget | cell | output] along columns.
struct LstmParams {
  ParamId input_weights = 0;  // (in, 4d)
  ParamId state_weights = 0;  // (d, 4d)
  ParamId bias = 0;           // (1, 4d)
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
};

template <typename T>
LstmParams make_lstm(ParameterStore<T>& store, const std::string& name,
                     std::size_t input_dim, std::size_t hidden, Rng& rng) {
  const T r = T(1) / std::sqrt(static_cast<T>(hidden));
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.input_weights = store.add_uniform(name + ".w_x", {input_dim, 4 * hidden}, r, rng);
  p.state_weights = store.add_uniform(name + ".w_h", {hidden, 4 * hidden}, r, rng);
  p.bias = store.add_uniform(name + ".b", {1, 4 * hidden}, r, rng);
  return p;
}

template <typename T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

namespace detail {

template <typename T, typename Store>
LstmState<T> lstm_from_gates(Tape<T>& tape, Store& store, const LstmParams& p,
                             Var<T> gates, const LstmState<T>& state) {
  if (state.h.valid()) gates = add(gates, matmul(state.h, tape.param(store, p.state_weights)));
  const std::size_t d = p.hidden;
  Var<T> i = sigmoid(slice_cols(gates, 0, d));
  Var<T> f = sigmoid(slice_cols(gates, d, d));
  Var<T> g = tanh(slice_cols(gates, 2 * d, d));
  Var<T> o = sigmoid(slice_cols(gates, 3 * d, d));
  Var<T> c = mul(i, g);
  if (state.c.valid()) c = add(mul(f, state.c), c);
  Var<T> h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace detail

/// One LSTM transition for a batch of rows. An invalid (default) state means
/// the zero state.
template <typename T, typename Store>
LstmState<T> lstm_step(Tape<T>& tape, Store& store, const LstmParams& p,
                       const Var<T>& input, const LstmState<T>& state) {
  if (input.cols() != p.input_dim)
    throw ShapeError("lstm_step: input width " + std::to_string(input.cols()) +
                     " != " + std::to_string(p.input_dim));
  if (state.h.valid() && (state.h.cols() != p.hidden || state.c.cols() != p.hidden ||
                          state.h.rows() != input.rows()))
    throw ShapeError("lstm_step: state does not match hidden width");
  Var<T> gates = add(matmul(input, tape.param(store, p.input_weights)),
                     tape.param(store, p.bias));
  return detail::lstm_from_gates(tape, store, p, gates, state);
}

/// Runs an LSTM over the rows of `inputs` (one time step per row), left to
/// right or right to left. Returns the hidden state at every position in
/// input order.
template <typename T, typename Store>
Var<T> run_lstm(Tape<T>& tape, Store& store, const LstmParams& p,
                const Var<T>& inputs, bool reverse) {
  const std::size_t n = inputs.rows();
  if (n == 0) throw ShapeError("run_lstm: empty sequence");
  Var<T> projected = add(matmul(inputs, tape.param(store, p.input_weights)),
                         tape.param(store, p.bias));
  std::vector<Var<T>> outputs(n);
  LstmState<T> state;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = reverse ? n - 1 - k : k;
    state = detail::lstm_from_gates(tape, store, p, slice_rows(projected, t, 1), state);
    outputs[t] = state.h;
  }
  return concat_rows(outputs);
}

struct BiLayerParams {
  LstmParams forward;
  LstmParams backward;
  ParamId proj_weights = 0;  // (2d, d)
  ParamId proj_bias = 0;     // (1, d)
};

struct BiEncoderParams {
  std::vector<BiLayerParams> layers;
  std::size_t width = 0;
};

template <typename T>
BiEncoderParams make_bi_encoder(ParameterStore<T>& store, const std::string& name,
                                std::size_t width, std::size_t layers, Rng& rng) {
  BiEncoderParams p;
  p.width = width;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string prefix = name + ".layer" + std::to_string(l);
    BiLayerParams layer;
    layer.forward = make_lstm(store, prefix + ".fwd", width, width, rng);
    layer.backward = make_lstm(store, prefix + ".bwd", width, width, rng);
    layer.proj_weights = store.add_glorot(prefix + ".proj.w", 2 * width, width, rng);
    layer.proj_bias = store.add_constant(prefix + ".proj.b", {1, width}, T(0));
    p.layers.push_back(layer);
  }
  return p;
}

template <typename T>
struct BiLayerOutput {
  Var<T> forward;    // (n, d)
  Var<T> backward;   // (n, d)
  Var<T> projected;  // (n, d)
};

template <typename T, typename Store>
BiLayerOutput<T> bi_layer(Tape<T>& tape, Store& store, const BiLayerParams& p,
                          const Var<T>& inputs) {
  BiLayerOutput<T> out;
  out.forward = run_lstm(tape, store, p.forward, inputs, false);
  out.backward = run_lstm(tape, store, p.backward, inputs, true);
  out.projected = add(matmul(concat_cols(std::vector<Var<T>>{out.forward, out.backward}),
                             tape.param(store, p.proj_weights)),
                      tape.param(store, p.proj_bias));
  return out;
}

/// Stacked bidirectional encoder; each layer concatenates both directions and
/// projects back to the model width. Dropout is applied between layers.
template <typename T, typename Store>
Var<T> bi_encode(Tape<T>& tape, Store& store, const BiEncoderParams& p,
                 const Var<T>& inputs, T dropout_rate = T(0), bool train = false,
                 Rng* rng = nullptr) {
  if (inputs.rows() == 0) throw ShapeError("bi_encode: empty sequence");
  Var<T> x = inputs;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (l > 0) x = dropout(x, dropout_rate, train, rng);
    x = bi_layer(tape, store, p.layers[l], x).projected;
  }
  return x;
}

}  // namespace np2mt::nn
