#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "np2mt/nn/attention.hpp"
#include "np2mt/numerics/ops.hpp"
#include "np2mt/numerics/parameters.hpp"

namespace np2mt::nn {

struct LayerNormParams {
  ParamId gain = 0;
  ParamId bias = 0;
};

template <typename T>
LayerNormParams make_layer_norm(ParameterStore<T>& store, const std::string& name,
                                std::size_t width) {
  return {store.add_constant(name + ".gain", {1, width}, T(1)),
          store.add_constant(name + ".bias", {1, width}, T(0))};
}

template <typename T, typename Store>
Var<T> apply_layer_norm(Tape<T>& tape, Store& store, const LayerNormParams& p,
                        const Var<T>& x) {
  return layer_norm_rows(x, tape.param(store, p.gain), tape.param(store, p.bias));
}

struct DecoderLayerParams {
  LayerNormParams self_norm;
  AttentionParams self_attention;
  LayerNormParams cross_norm;
  AttentionParams cross_attention;
  LayerNormParams ff_norm;
  ParamId ff_in = 0;     // (d, ff)
  ParamId ff_in_b = 0;   // (1, ff)
  ParamId ff_out = 0;    // (ff, d)
  ParamId ff_out_b = 0;  // (1, d)
};

struct DecoderStackParams {
  std::vector<DecoderLayerParams> layers;
  LayerNormParams final_norm;
  std::size_t width = 0;
  std::size_t heads = 1;
  std::size_t ff_width = 0;
};

template <typename T>
DecoderStackParams make_decoder_stack(ParameterStore<T>& store, const std::string& name,
                                      std::size_t width, std::size_t layers,
                                      std::size_t heads, std::size_t ff_width, Rng& rng) {
  DecoderStackParams p;
  p.width = width;
  p.heads = heads;
  p.ff_width = ff_width;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string prefix = name + ".layer" + std::to_string(l);
    DecoderLayerParams layer;
    layer.self_norm = make_layer_norm(store, prefix + ".self_norm", width);
    layer.self_attention = make_attention(store, prefix + ".self", width, heads, rng);
    layer.cross_norm = make_layer_norm(store, prefix + ".cross_norm", width);
    layer.cross_attention = make_attention(store, prefix + ".cross", width, heads, rng);
    layer.ff_norm = make_layer_norm(store, prefix + ".ff_norm", width);
    layer.ff_in = store.add_glorot(prefix + ".ff.w1", width, ff_width, rng);
    layer.ff_in_b = store.add_constant(prefix + ".ff.b1", {1, ff_width}, T(0));
    layer.ff_out = store.add_glorot(prefix + ".ff.w2", ff_width, width, rng);
    layer.ff_out_b = store.add_constant(prefix + ".ff.b2", {1, width}, T(0));
    p.layers.push_back(layer);
  }
  p.final_norm = make_layer_norm(store, name + ".final_norm", width);
  return p;
}

struct DecoderRun {
  bool train = false;
  Rng* rng = nullptr;
  double dropout = 0.0;
};

/// Pre-norm transformer decoder: causal self-attention over `inputs`,
/// cross-attention over `memory`, position-wise feed-forward. Sinusoidal
/// positions are added to the inputs here. Output row t depends only on
/// input rows <= t and on the memory.
template <typename T, typename Store>
Var<T> decoder_stack(Tape<T>& tape, Store& store, const DecoderStackParams& p,
                     const Var<T>& inputs, const Var<T>& memory, const DecoderRun& run = {},
                     std::vector<Var<T>>* cross_weights = nullptr) {
  if (inputs.rows() == 0) throw ShapeError("decoder_stack: empty prefix");
  if (inputs.cols() != p.width) throw ShapeError("decoder_stack: input width mismatch");
  const T rate = static_cast<T>(run.dropout);
  Var<T> x = add(inputs, tape.constant(sinusoid_positions<T>(inputs.rows(), p.width)));
  x = dropout(x, rate, run.train, run.rng);
  for (const auto& layer : p.layers) {
    Var<T> h = apply_layer_norm(tape, store, layer.self_norm, x);
    h = multi_head_attention(tape, store, layer.self_attention, h, h, true, rate, run.train,
                             run.rng);
    x = add(x, h);
    h = apply_layer_norm(tape, store, layer.cross_norm, x);
    h = multi_head_attention(tape, store, layer.cross_attention, h, memory, false, rate,
                             run.train, run.rng, cross_weights);
    x = add(x, h);
    h = apply_layer_norm(tape, store, layer.ff_norm, x);
    h = relu(add(matmul(h, tape.param(store, layer.ff_in)), tape.param(store, layer.ff_in_b)));
    h = dropout(h, rate, run.train, run.rng);
    h = add(matmul(h, tape.param(store, layer.ff_out)), tape.param(store, layer.ff_out_b));
    x = add(x, h);
  }
  return apply_layer_norm(tape, store, p.final_norm, x);
}

}  // namespace np2mt::nn
