#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/data/dictionary.hpp"
#include "np2mt/decode/trace.hpp"
#include "np2mt/model/model.hpp"

namespace np2mt {

/// What the decoders need from a model conditioned on one source sentence.
/// Log-probability vectors are indexed by target id and hold -inf for
/// symbols the segment decoder may not emit at that position.
template <typename D>
concept SegmentDecoderModel = requires(const D& d, std::span<const int> ids,
                                       const typename D::Context& ctx, const std::string& w) {
  { d.attend(ids) } -> std::same_as<typename D::Attention>;
  { d.next_logprobs(ctx, ids) } -> std::same_as<std::vector<double>>;
  { d.segment_logprob(ctx, ids) } -> std::convertible_to<double>;
  { d.spans() } -> std::convertible_to<const std::vector<SourceSpan>&>;
  { d.max_length() } -> std::convertible_to<std::size_t>;
  { d.feed_id(w) } -> std::convertible_to<int>;
  { d.word(0) } -> std::convertible_to<std::string>;
};

/// Adapter exposing an Np2mtModel and an encoded source sentence to the
/// decoders. The span table is computed once; every query runs on its own
/// gradient-free tape.
template <typename T>
class ModelDecoder {
 public:
  using Context = Tensor<T>;
  struct Attention {
    std::vector<double> weights;  // one per span
    Context context;              // a_j, (1, d)
  };

  ModelDecoder(const Np2mtModel<T>& model, std::span<const int> source,
               const Vocabulary& target_vocab)
      : model_(model), vocab_(target_vocab) {
    if (target_vocab.size() != model.config().tgt_vocab)
      throw std::invalid_argument("target vocabulary does not match the model");
    Tape<T> tape(TapeOptions{.grad_enabled = false});
    auto table = model.encode_source_phrases(tape, source, {});
    length_ = table.length;
    spans_ = table.spans;
    vectors_ = table.vectors.value();
  }

  const std::vector<SourceSpan>& spans() const { return spans_; }
  std::size_t max_length() const { return model_.config().max_decode_length; }
  std::size_t max_segment() const { return model_.config().max_tgt_segment; }

  Attention attend(std::span<const int> prefix) const {
    Tape<T> tape(TapeOptions{.grad_enabled = false});
    PhraseEncodingTable<T> table{length_, spans_, tape.constant_ref(vectors_)};
    Var<T> states = model_.encode_target_prefixes(tape, prefix, {});
    auto att = model_.attend(tape, slice_rows(states, prefix.size(), 1), table);
    const auto& w = att.weights.value();
    return {std::vector<double>(w.values().begin(), w.values().end()), att.context.value()};
  }

  std::vector<double> next_logprobs(const Context& context, std::span<const int> open) const {
    Tape<T> tape(TapeOptions{.grad_enabled = false});
    auto lp = model_.symbol_logprobs(tape, tape.constant_ref(context), open, {}).value();
    const std::size_t row = open.size(), vocab = lp.cols();
    std::vector<double> out(vocab, -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < vocab; ++c)
      if (model_.allowed(row, static_cast<int>(c))) out[c] = static_cast<double>(lp(row, c));
    return out;
  }

  /// log p(ids $ | a_j). Phrases longer than a training segment are scored
  /// without the segment-length bound.
  double segment_logprob(const Context& context, std::span<const int> ids) const {
    if (ids.empty()) throw std::invalid_argument("cannot score an empty phrase");
    Tape<T> tape(TapeOptions{.grad_enabled = false});
    const bool cap = ids.size() <= max_segment();
    auto lp = model_.symbol_logprobs(tape, tape.constant_ref(context), ids, {}, cap).value();
    double total = 0.0;
    for (std::size_t l = 0; l < ids.size(); ++l)
      total += static_cast<double>(lp(l, static_cast<std::size_t>(ids[l])));
    return total + static_cast<double>(lp(ids.size(), static_cast<std::size_t>(Special::kSegEnd)));
  }

  int feed_id(const std::string& word) const { return vocab_.id(word); }
  std::string word(int id) const { return vocab_.token(id); }

 private:
  const Np2mtModel<T>& model_;
  const Vocabulary& vocab_;
  std::size_t length_ = 0;
  std::vector<SourceSpan> spans_;
  Tensor<T> vectors_;
};

struct DecodeResult {
  TokenSeq words;
  std::vector<int> ids;  // what the target encoder was fed
  DecodeTrace trace;
  bool truncated = false;
  double score = 0.0;  // summed log-probs of emitted symbols, $ and eos included
};

namespace detail {

inline std::size_t first_argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

enum class SegmentEnd { closed, finished, truncated };

template <typename D>
TraceSegment start_segment(const D& model, const typename D::Attention& att) {
  const std::size_t best = first_argmax(att.weights);
  return {model.spans().at(best), att.weights[best], false, {}};
}

/// Greedy generation of one segment, appended to `out`.
template <typename D>
SegmentEnd generate_segment(const D& model, const typename D::Attention& att, DecodeResult& out) {
  TraceSegment seg = start_segment(model, att);
  std::vector<int> open;
  SegmentEnd end;
  while (true) {
    auto lp = model.next_logprobs(att.context, open);
    const int s = static_cast<int>(first_argmax(lp));
    if (s == Special::kSegEnd || s == Special::kEos) {
      out.score += lp[static_cast<std::size_t>(s)];
      end = s == Special::kEos ? SegmentEnd::finished : SegmentEnd::closed;
      break;
    }
    if (out.words.size() >= model.max_length()) {
      out.truncated = true;
      end = SegmentEnd::truncated;
      break;
    }
    out.score += lp[static_cast<std::size_t>(s)];
    open.push_back(s);
    out.ids.push_back(s);
    out.words.push_back(model.word(s));
    seg.words.push_back(out.words.back());
  }
  if (!seg.words.empty()) out.trace.segments.push_back(std::move(seg));
  return end;
}

}  // namespace detail

/// Segment-by-segment argmax decoding. Stops at eos, or flags truncation
/// when another word would exceed the model's maximum decode length.
template <SegmentDecoderModel D>
DecodeResult greedy_decode(const D& model) {
  DecodeResult out;
  while (true) {
    auto att = model.attend(out.ids);
    if (detail::generate_segment(model, att, out) != detail::SegmentEnd::closed) return out;
  }
}

struct CandidateChoice {
  std::size_t index = 0;
  std::vector<double> scores;
};

/// Scores each candidate phrase as log p(phrase $ | a_j); the first best wins.
template <SegmentDecoderModel D>
CandidateChoice score_dictionary_candidates(const D& model, const typename D::Context& context,
                                            std::span<const std::vector<int>> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no dictionary candidates to score");
  CandidateChoice choice;
  for (const auto& c : candidates) choice.scores.push_back(model.segment_logprob(context, c));
  choice.index = detail::first_argmax(choice.scores);
  return choice;
}

/// Greedy decoding with dictionary substitution: when the most attended
/// source span contains an UNK-masked word and its raw surface is a
/// dictionary key, the best-scoring candidate is emitted verbatim as the
/// next segment. Dictionary words unknown to the target vocabulary are fed
/// back as UNK. A dictionary phrase never ends the sentence, and each source
/// span is looked up at most once, so decoding cannot stall on a span that
/// stays attended after its translation.
template <SegmentDecoderModel D>
DecodeResult dict_greedy_decode(const D& model, const Sentence& source,
                                const PhraseDictionary& dict) {
  if (source.raw.size() != source.ids.size())
    throw std::invalid_argument("source needs both raw surfaces and masked ids");
  DecodeResult out;
  std::vector<SourceSpan> used;
  while (true) {
    auto att = model.attend(out.ids);
    TraceSegment seg = detail::start_segment(model, att);
    const std::size_t b = seg.span.begin - 1, n = seg.span.length();
    const bool fresh = std::find(used.begin(), used.end(), seg.span) == used.end();
    const bool has_unk = fresh && std::any_of(source.ids.begin() + static_cast<std::ptrdiff_t>(b),
                                     source.ids.begin() + static_cast<std::ptrdiff_t>(b + n),
                                     [](int id) { return id == Special::kUnk; });
    const std::vector<TokenSeq>* candidates =
        has_unk ? dict.lookup(std::span<const std::string>(source.raw).subspan(b, n)) : nullptr;
    if (candidates) {
      std::vector<std::vector<int>> ids;
      for (const auto& c : *candidates) {
        ids.emplace_back();
        for (const auto& w : c) ids.back().push_back(model.feed_id(w));
      }
      auto choice = score_dictionary_candidates(model, att.context, ids);
      const TokenSeq& best = (*candidates)[choice.index];
      if (out.words.size() + best.size() > model.max_length()) {
        out.truncated = true;
        return out;
      }
      out.score += choice.scores[choice.index];
      out.words.insert(out.words.end(), best.begin(), best.end());
      out.ids.insert(out.ids.end(), ids[choice.index].begin(), ids[choice.index].end());
      used.push_back(seg.span);
      seg.dictionary = true;
      seg.words = best;
      out.trace.segments.push_back(std::move(seg));
      continue;
    }
    if (detail::generate_segment(model, att, out) != detail::SegmentEnd::closed) return out;
  }
}

/// Word-level beam search. Z holds appendable hypotheses and is pruned to
/// the k best after every expansion; Y collects eos-terminated hypotheses.
/// Hypotheses that would exceed `horizon` words are set aside as truncated
/// and only returned when Y ends up empty. Scores are unnormalized sums of
/// log-probabilities.
template <SegmentDecoderModel D>
DecodeResult beam_search(const D& model, std::size_t k, std::size_t horizon = 0) {
  if (k < 1) throw std::invalid_argument("beam size must be >= 1");
  if (horizon == 0) horizon = model.max_length();
  struct Hypothesis {
    DecodeResult result;
    std::vector<int> open;
    std::optional<typename D::Attention> attention;  // of the open segment
  };
  auto by_score = [](const auto& a, const auto& b) { return a.result.score > b.result.score; };

  std::vector<Hypothesis> live(1), finished, truncated;
  while (!live.empty()) {
    std::vector<Hypothesis> next;
    for (auto& h : live) {
      if (!h.attention) {
        h.attention = model.attend(h.result.ids);
        h.result.trace.segments.push_back(detail::start_segment(model, *h.attention));
      }
      auto lp = model.next_logprobs(h.attention->context, h.open);
      std::vector<std::size_t> order;
      for (std::size_t s = 0; s < lp.size(); ++s)
        if (std::isfinite(lp[s])) order.push_back(s);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return lp[a] > lp[b]; });
      if (order.size() > k) order.resize(k);
      bool set_aside = false;
      for (std::size_t s : order) {
        const int sym = static_cast<int>(s);
        if (sym != Special::kSegEnd && sym != Special::kEos && h.result.words.size() >= horizon) {
          if (!set_aside) {
            Hypothesis t = h;
            t.result.truncated = true;
            truncated.push_back(std::move(t));
            set_aside = true;
          }
          continue;
        }
        Hypothesis c = h;
        c.result.score += lp[s];
        if (sym == Special::kEos) {
          finished.push_back(std::move(c));
        } else if (sym == Special::kSegEnd) {
          c.open.clear();
          c.attention.reset();
          next.push_back(std::move(c));
        } else {
          c.open.push_back(sym);
          c.result.ids.push_back(sym);
          c.result.words.push_back(model.word(sym));
          c.result.trace.segments.back().words.push_back(c.result.words.back());
          next.push_back(std::move(c));
        }
      }
    }
    std::stable_sort(next.begin(), next.end(), by_score);
    if (next.size() > k) next.resize(k);
    live = std::move(next);
  }
  auto& pool = finished.empty() ? truncated : finished;
  auto best = std::min_element(pool.begin(), pool.end(), by_score);
  DecodeResult out = std::move(best->result);
  std::erase_if(out.trace.segments, [](const TraceSegment& s) { return s.words.empty(); });
  return out;
}

}  // namespace np2mt
