#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/data/vocabulary.hpp"
#include "np2mt/model/config.hpp"
#include "np2mt/nn/attention.hpp"
#include "np2mt/nn/decoder_stack.hpp"
#include "np2mt/nn/lstm.hpp"
#include "np2mt/numerics/ops.hpp"
#include "np2mt/numerics/parameters.hpp"
#include "np2mt/numerics/random.hpp"

namespace np2mt {

struct RunMode {
  bool train = false;
  Rng* rng = nullptr;  // required when train is set and dropout > 0
};

/// Source phrase x[begin..end], 1-based and inclusive.
struct SourceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin + 1; }
  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

inline std::size_t span_count(std::size_t length, std::size_t max_span) {
  std::size_t n = 0;
  for (std::size_t i = 1; i <= length; ++i) n += std::min(max_span, length - i + 1);
  return n;
}

/// Admissible spans ordered by length, then by start.
inline std::vector<SourceSpan> enumerate_spans(std::size_t length, std::size_t max_span) {
  std::vector<SourceSpan> spans;
  for (std::size_t k = 0; k < std::min(max_span, length); ++k)
    for (std::size_t i = 1; i + k <= length; ++i) spans.push_back({i, i + k});
  return spans;
}

template <typename T>
struct PhraseEncodingTable {
  std::size_t length = 0;
  std::vector<SourceSpan> spans;
  Var<T> vectors;  // one row per span

  std::size_t size() const { return spans.size(); }
  std::size_t index_of(SourceSpan s) const {
    auto it = std::find(spans.begin(), spans.end(), s);
    if (it == spans.end()) throw std::out_of_range("span not in table");
    return static_cast<std::size_t>(it - spans.begin());
  }
};

/// Attention over the span table for a batch of prefix states.
template <typename T>
struct AttentionStates {
  Var<T> weights;  // (prefixes, spans), rows sum to one
  Var<T> context;  // (prefixes, d): the a_j rows
};

/// Scores of every segment hypothesis starting at one target position.
/// Index l-1 refers to the prefix of length l of the window.
template <typename T>
struct PrefixScores {
  std::vector<Var<T>> tokens;   // cumulative token log-probs
  std::vector<Var<T>> seg_end;  // tokens + log p($ | prefix)
  std::vector<Var<T>> eos_end;  // tokens + log p(eos | prefix)
};

template <typename T>
class Np2mtModel {
 public:
  using value_type = T;

  Np2mtModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const std::size_t d = config_.width;
    src_embed_ = store_.add_uniform("src.embed", {config_.src_vocab, d}, T(1), rng);
    tgt_embed_ = store_.add_uniform("tgt.embed", {config_.tgt_vocab, d}, T(1), rng);
    sentence_encoder_ = nn::make_bi_encoder(store_, "src.sentence", d, config_.encoder_layers, rng);
    span_forward_ = nn::make_lstm(store_, "src.phrase.fwd", d, d, rng);
    span_backward_ = nn::make_lstm(store_, "src.phrase.bwd", d, d, rng);
    span_proj_ = store_.add_glorot("src.phrase.proj.w", 2 * d, d, rng);
    span_proj_b_ = store_.add_constant("src.phrase.proj.b", {1, d}, T(0));
    for (std::size_t l = 0; l < config_.encoder_layers; ++l)
      target_encoder_.push_back(
          nn::make_lstm(store_, "tgt.prefix.layer" + std::to_string(l), d, d, rng));
    attn_query_ = store_.add_glorot("attn.w_q", d, d, rng);
    attn_key_ = store_.add_glorot("attn.w_k", d, d, rng);
    attn_value_ = store_.add_glorot("attn.w_v", d, d, rng);
    attn_combine_ = store_.add_glorot("attn.combine.w", 2 * d, d, rng);
    attn_combine_b_ = store_.add_constant("attn.combine.b", {1, d}, T(0));
    segment_start_ = store_.add_uniform("seg.start", {1, d}, T(1), rng);
    decoder_ = nn::make_decoder_stack(store_, "seg.decoder", d, config_.decoder_layers,
                                      config_.heads, config_.ff_width, rng);
    out_proj_ = store_.add_glorot("seg.out.w", d, config_.tgt_vocab, rng);
    out_proj_b_ = store_.add_constant("seg.out.b", {1, config_.tgt_vocab}, T(0));
  }

  const ModelConfig& config() const { return config_; }
  // Forward passes are const; a gradient tape still accumulates into the
  // store, which is why it is mutable.
  ParameterStore<T>& params() const { return store_; }

  std::size_t decoder_token_evaluations() const { return token_evaluations_; }
  void reset_token_evaluations() const { token_evaluations_ = 0; }

  /// Bidirectional sentence encoding s_1..s_T, one row per token.
  Var<T> encode_sentence(Tape<T>& tape, std::span<const int> source, const RunMode& mode) const {
    if (source.empty()) throw std::invalid_argument("empty source sentence");
    check_ids(source, config_.src_vocab, "source");
    Var<T> x = gather_rows(tape.param(store_, src_embed_), source);
    x = dropout(x, rate(), mode.train, mode.rng);
    return nn::bi_encode(tape, store_, sentence_encoder_, x, rate(), mode.train, mode.rng);
  }

  /// Encodes every admissible span with a bidirectional pass over its
  /// sentence states; the two final states are concatenated and projected.
  /// Spans sharing a start (forward) or an end (backward) share their
  /// recurrent prefix, so the cost is O(T * max_src_span).
  PhraseEncodingTable<T> encode_source_phrases(Tape<T>& tape, std::span<const int> source,
                                               const RunMode& mode) const {
    Var<T> states = encode_sentence(tape, source, mode);
    const std::size_t len = source.size();
    const std::size_t longest = std::min(config_.max_src_span, len);
    Var<T> fwd_in = add(matmul(states, tape.param(store_, span_forward_.input_weights)),
                        tape.param(store_, span_forward_.bias));
    Var<T> bwd_in = add(matmul(states, tape.param(store_, span_backward_.input_weights)),
                        tape.param(store_, span_backward_.bias));
    nn::LstmState<T> fwd, bwd;
    std::vector<Var<T>> blocks;
    for (std::size_t k = 0; k < longest; ++k) {
      const std::size_t n = len - k;  // spans of length k+1
      nn::LstmState<T> fprev, bprev;
      if (k > 0) {
        // forward rows are indexed by start, backward rows by end
        fprev = {slice_rows(fwd.h, 0, n), slice_rows(fwd.c, 0, n)};
        bprev = {slice_rows(bwd.h, 1, n), slice_rows(bwd.c, 1, n)};
      }
      fwd = nn::detail::lstm_from_gates(tape, store_, span_forward_, slice_rows(fwd_in, k, n), fprev);
      bwd = nn::detail::lstm_from_gates(tape, store_, span_backward_, slice_rows(bwd_in, 0, n),
                                        bprev);
      Var<T> both = concat_cols(std::vector<Var<T>>{fwd.h, bwd.h});
      blocks.push_back(add(matmul(both, tape.param(store_, span_proj_)),
                           tape.param(store_, span_proj_b_)));
    }
    PhraseEncodingTable<T> table;
    table.length = len;
    table.spans = enumerate_spans(len, config_.max_src_span);
    table.vectors = blocks.size() == 1 ? blocks.front() : concat_rows(blocks);
    return table;
  }

  /// Causal prefix states for j = 0..T' (row j has seen <s> y_1..y_j).
  Var<T> encode_target_prefixes(Tape<T>& tape, std::span<const int> target,
                                const RunMode& mode) const {
    check_ids(target, config_.tgt_vocab, "target");
    std::vector<int> ids;
    ids.reserve(target.size() + 1);
    ids.push_back(Special::kBos);
    ids.insert(ids.end(), target.begin(), target.end());
    Var<T> x = gather_rows(tape.param(store_, tgt_embed_), std::span<const int>(ids));
    x = dropout(x, rate(), mode.train, mode.rng);
    for (std::size_t l = 0; l < target_encoder_.size(); ++l) {
      if (l > 0) x = dropout(x, rate(), mode.train, mode.rng);
      x = nn::run_lstm(tape, store_, target_encoder_[l], x, false);
    }
    return x;
  }

  /// Phrase-level attention: scaled dot product between projected prefix
  /// states and projected span vectors, softmax over all spans, then the
  /// context is merged with the prefix state into a_j.
  AttentionStates<T> attend(Tape<T>& tape, const Var<T>& prefix_states,
                            const PhraseEncodingTable<T>& table) const {
    if (table.size() == 0) throw std::invalid_argument("empty phrase table");
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(config_.width));
    Var<T> q = matmul(prefix_states, tape.param(store_, attn_query_));
    Var<T> k = matmul(table.vectors, tape.param(store_, attn_key_));
    Var<T> v = matmul(table.vectors, tape.param(store_, attn_value_));
    AttentionStates<T> out;
    out.weights = softmax_rows(scale(matmul_nt(q, k), inv_scale));
    Var<T> ctx = matmul(out.weights, v);
    out.context = tanh(add(matmul(concat_cols(std::vector<Var<T>>{ctx, prefix_states}),
                                  tape.param(store_, attn_combine_)),
                           tape.param(store_, attn_combine_b_)));
    return out;
  }

  /// Whether the segment decoder may emit `id` after `position` tokens of the
  /// current segment. Segments are non-empty and at most max_tgt_segment
  /// long; padding and <s> are never emitted.
  bool allowed(std::size_t position, int id, bool cap = true) const {
    if (id == Special::kPad || id == Special::kBos) return false;
    const bool closer = id == Special::kSegEnd || id == Special::kEos;
    if (position == 0) return !closer;
    if (cap && position >= config_.max_tgt_segment) return closer;
    return true;
  }

  /// Log-distributions of the segment decoder for the window prefixes of
  /// length 0..m, conditioned on one attention state (1, d) used as a
  /// length-one cross-attention memory. Disallowed symbols carry the mask
  /// value. With cap=false the segment length bound is not applied (used to
  /// score dictionary phrases longer than a training segment).
  Var<T> symbol_logprobs(Tape<T>& tape, const Var<T>& context, std::span<const int> window,
                         const RunMode& mode, bool cap = true) const {
    if (context.rows() != 1 || context.cols() != config_.width)
      throw ShapeError("symbol_logprobs: context must be (1, width)");
    if (cap && window.size() > config_.max_tgt_segment)
      throw std::invalid_argument("window of " + std::to_string(window.size()) +
                                  " tokens exceeds max_tgt_segment " +
                                  std::to_string(config_.max_tgt_segment));
    check_ids(window, config_.tgt_vocab, "window");
    Var<T> inputs = tape.param(store_, segment_start_);
    if (!window.empty()) {
      Var<T> emb = gather_rows(tape.param(store_, tgt_embed_), window);
      inputs = concat_rows(std::vector<Var<T>>{inputs, emb});
    }
    std::atomic_ref<std::size_t>(token_evaluations_).fetch_add(window.size(), std::memory_order_relaxed);
    nn::DecoderRun run{mode.train, mode.rng, config_.dropout};
    Var<T> h = nn::decoder_stack(tape, store_, decoder_, inputs, context, run);
    Var<T> logits = add(matmul(h, tape.param(store_, out_proj_)), tape.param(store_, out_proj_b_));
    const std::size_t rows = window.size() + 1, vocab = config_.tgt_vocab;
    Tensor<T> mask(Shape{rows, vocab});
    for (std::size_t p = 0; p < rows; ++p)
      for (std::size_t c = 0; c < vocab; ++c)
        if (!allowed(p, static_cast<int>(c), cap)) mask(p, c) = nn::kMaskValue<T>;
    return log_softmax_rows(add(logits, tape.constant(std::move(mask))));
  }

  /// One decoder pass scoring every segment hypothesis y_{j'+1..j'+l},
  /// l = 1..m, that starts right after the attention state's prefix.
  PrefixScores<T> segment_prefix_logprobs(Tape<T>& tape, const Var<T>& context,
                                          std::span<const int> window,
                                          const RunMode& mode) const {
    if (window.empty()) throw std::invalid_argument("segment window must be non-empty");
    Var<T> lp = symbol_logprobs(tape, context, window, mode, true);
    PrefixScores<T> out;
    Var<T> running;
    for (std::size_t l = 1; l <= window.size(); ++l) {
      Var<T> tok = pick(lp, l - 1, static_cast<std::size_t>(window[l - 1]));
      running = running.valid() ? add(running, tok) : tok;
      out.tokens.push_back(running);
      out.seg_end.push_back(add(running, pick(lp, l, static_cast<std::size_t>(Special::kSegEnd))));
      out.eos_end.push_back(add(running, pick(lp, l, static_cast<std::size_t>(Special::kEos))));
    }
    return out;
  }

 private:
  T rate() const { return static_cast<T>(config_.dropout); }

  static void check_ids(std::span<const int> ids, std::size_t vocab, const char* what) {
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= vocab)
        throw std::out_of_range(std::string(what) + " id " + std::to_string(id) +
                                " outside vocabulary of " + std::to_string(vocab));
  }

  ModelConfig config_;
  mutable ParameterStore<T> store_;
  mutable std::size_t token_evaluations_ = 0;

  ParamId src_embed_ = 0, tgt_embed_ = 0;
  nn::BiEncoderParams sentence_encoder_;
  nn::LstmParams span_forward_, span_backward_;
  ParamId span_proj_ = 0, span_proj_b_ = 0;
  std::vector<nn::LstmParams> target_encoder_;
  ParamId attn_query_ = 0, attn_key_ = 0, attn_value_ = 0, attn_combine_ = 0, attn_combine_b_ = 0;
  ParamId segment_start_ = 0;
  nn::DecoderStackParams decoder_;
  ParamId out_proj_ = 0, out_proj_b_ = 0;
};

}  // namespace np2mt
