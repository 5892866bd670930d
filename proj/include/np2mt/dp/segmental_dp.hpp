#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "np2mt/model/model.hpp"
#include "np2mt/numerics/ops.hpp"

// Exact marginalization over target segmentations.
//
// alpha(j) is the probability of emitting y_1..y_j as a sequence of closed
// segments. A segment ending before the last target position is closed by
// the end-of-segment symbol; the segment ending at T' is closed by eos,
// which is what lets the model's probabilities sum to one over sentences.

namespace np2mt {

template <typename T>
struct SegmentScore {
  Var<T> seg_end;  // log p(y_{j'+1..j} $ | a_j')
  Var<T> eos_end;  // log p(y_{j'+1..j} eos | a_j'), only for j == T'
};

/// Log-scores of every admissible segment (j', j], j - j' <= max_segment.
template <typename T>
struct SegmentScoreTable {
  std::size_t length = 0;
  std::size_t max_segment = 0;
  std::vector<std::vector<SegmentScore<T>>> entries;  // [start][len - 1]
  std::size_t token_evaluations = 0;

  SegmentScoreTable() = default;
  SegmentScoreTable(std::size_t target_length, std::size_t segment_cap)
      : length(target_length), max_segment(segment_cap), entries(target_length) {
    for (std::size_t s = 0; s < length; ++s)
      entries[s].resize(std::min(max_segment, length - s));
  }

  /// The score a segmentation uses for (start, end]: eos-closed at the end
  /// of the sentence, $-closed elsewhere.
  const Var<T>& used(std::size_t start, std::size_t end) const {
    if (start >= end || end > length || end - start > max_segment ||
        end - start > entries[start].size())
      throw std::out_of_range("segment (" + std::to_string(start) + ", " + std::to_string(end) +
                              "] outside table");
    const auto& e = entries[start][end - start - 1];
    const Var<T>& v = end == length ? e.eos_end : e.seg_end;
    if (!v.valid())
      throw std::logic_error("missing score for segment (" + std::to_string(start) + ", " +
                             std::to_string(end) + "]");
    return v;
  }

  double used_value(std::size_t start, std::size_t end) const {
    return static_cast<double>(used(start, end).item());
  }
};

/// Table filled from plain numbers: `score(start, end, eos)`.
template <typename T>
SegmentScoreTable<T> constant_score_table(
    Tape<T>& tape, std::size_t length, std::size_t max_segment,
    const std::function<T(std::size_t, std::size_t, bool)>& score) {
  SegmentScoreTable<T> table(length, max_segment);
  for (std::size_t s = 0; s < length; ++s)
    for (std::size_t l = 1; l <= table.entries[s].size(); ++l) {
      auto& e = table.entries[s][l - 1];
      e.seg_end = tape.constant(Tensor<T>::scalar(score(s, s + l, false)));
      if (s + l == length) e.eos_end = tape.constant(Tensor<T>::scalar(score(s, s + l, true)));
    }
  return table;
}

/// Fills a table from any scorer exposing
///   PrefixScores<T> score_window(Tape<T>&, std::size_t start, std::span<const int> window)
/// with one call per start position.
template <typename T, typename Scorer>
SegmentScoreTable<T> build_segment_scores(Tape<T>& tape, Scorer& scorer,
                                          std::span<const int> target, std::size_t max_segment) {
  if (target.empty()) throw std::invalid_argument("target must contain at least one token");
  SegmentScoreTable<T> table(target.size(), max_segment);
  for (std::size_t s = 0; s < target.size(); ++s) {
    const std::size_t m = table.entries[s].size();
    PrefixScores<T> ps = scorer.score_window(tape, s, target.subspan(s, m));
    table.token_evaluations += m;
    for (std::size_t l = 1; l <= m; ++l) {
      auto& e = table.entries[s][l - 1];
      e.seg_end = ps.seg_end.at(l - 1);
      if (s + l == target.size()) e.eos_end = ps.eos_end.at(l - 1);
    }
  }
  return table;
}

/// Adapts the full model (source encoding, prefix encoding, attention) to
/// the scorer interface used by build_segment_scores.
template <typename T>
class ModelSegmentScorer {
 public:
  ModelSegmentScorer(Tape<T>& tape, const Np2mtModel<T>& model, std::span<const int> source,
                     std::span<const int> target, const RunMode& mode)
      : model_(model), mode_(mode) {
    table_ = model.encode_source_phrases(tape, source, mode);
    Var<T> prefixes = model.encode_target_prefixes(tape, target, mode);
    // a_j for j = 0..T'-1; the state after the full target starts no segment.
    attention_ = model.attend(tape, slice_rows(prefixes, 0, target.size()), table_);
  }

  PrefixScores<T> score_window(Tape<T>& tape, std::size_t start, std::span<const int> window) {
    return model_.segment_prefix_logprobs(tape, slice_rows(attention_.context, start, 1), window,
                                          mode_);
  }

  const PhraseEncodingTable<T>& phrase_table() const { return table_; }
  const AttentionStates<T>& attention() const { return attention_; }

 private:
  const Np2mtModel<T>& model_;
  RunMode mode_;
  PhraseEncodingTable<T> table_;
  AttentionStates<T> attention_;
};

template <typename T>
SegmentScoreTable<T> build_segment_scores(Tape<T>& tape, const Np2mtModel<T>& model,
                                          std::span<const int> source, std::span<const int> target,
                                          const RunMode& mode = {}) {
  if (target.empty()) throw std::invalid_argument("target must contain at least one token");
  ModelSegmentScorer<T> scorer(tape, model, source, target, mode);
  return build_segment_scores(tape, scorer, target, model.config().max_tgt_segment);
}

/// log alpha(0..T'), with log alpha(0) = 0.
template <typename T>
struct AlphaLattice {
  std::vector<Var<T>> log_alpha;
  const Var<T>& final() const { return log_alpha.back(); }
};

template <typename T>
AlphaLattice<T> alpha_lattice(Tape<T>& tape, const SegmentScoreTable<T>& table) {
  if (table.length == 0) throw std::invalid_argument("empty score table");
  AlphaLattice<T> lattice;
  lattice.log_alpha.push_back(tape.constant(Tensor<T>::scalar(T(0))));
  for (std::size_t j = 1; j <= table.length; ++j) {
    std::vector<Var<T>> terms;
    const std::size_t first = j > table.max_segment ? j - table.max_segment : 0;
    for (std::size_t s = first; s < j; ++s)
      terms.push_back(add(lattice.log_alpha[s], table.used(s, j)));
    lattice.log_alpha.push_back(terms.size() == 1 ? terms.front() : logsumexp(terms));
  }
  return lattice;
}

/// log p(y | x): the forward recursion truncated to segments of at most
/// max_segment tokens, giving O(T' * max_segment) work.
template <typename T>
Var<T> alpha_forward(Tape<T>& tape, const SegmentScoreTable<T>& table) {
  return alpha_lattice(tape, table).final();
}

/// Calls `visit(lengths)` for every composition of `length` into parts of
/// at most `max_part`.
inline void enumerate_segmentations(std::size_t length, std::size_t max_part,
                                    const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> parts;
  std::function<void(std::size_t)> rec = [&](std::size_t remaining) {
    if (remaining == 0) {
      visit(parts);
      return;
    }
    for (std::size_t p = 1; p <= std::min(max_part, remaining); ++p) {
      parts.push_back(p);
      rec(remaining - p);
      parts.pop_back();
    }
  };
  if (length > 0) rec(length);
}

/// Sum over explicit segmentations of the product of segment probabilities,
/// in linear space. Only for small instances.
template <typename T>
double brute_force_marginal(const SegmentScoreTable<T>& table) {
  if (table.length > 20 || table.max_segment > 5)
    throw std::invalid_argument("instance too large for enumeration");
  double total = 0.0;
  enumerate_segmentations(table.length, table.max_segment, [&](const std::vector<std::size_t>& parts) {
    double p = 1.0;
    std::size_t pos = 0;
    for (std::size_t len : parts) {
      p *= std::exp(table.used_value(pos, pos + len));
      pos += len;
    }
    total += p;
  });
  return total;
}

/// -log p(target | source) for one sentence pair.
template <typename T>
Var<T> sequence_nll(Tape<T>& tape, const Np2mtModel<T>& model, std::span<const int> source,
                    std::span<const int> target, const RunMode& mode = {}) {
  auto table = build_segment_scores(tape, model, source, target, mode);
  return scale(alpha_forward(tape, table), T(-1));
}

}  // namespace np2mt
