#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "np2mt/data/vocabulary.hpp"
#include "np2mt/decode/decoding.hpp"
#include "np2mt/dp/segmental_dp.hpp"
#include "np2mt/model/model.hpp"
#include "np2mt/numerics/random.hpp"

namespace np2mt::test {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Width 8, one layer everywhere, target vocabulary UNK plus `words` words.
inline ModelConfig tiny_config(std::size_t src_words = 4, std::size_t tgt_words = 3) {
  ModelConfig c;
  c.src_vocab = Special::kCount + src_words;
  c.tgt_vocab = Special::kCount + tgt_words;
  c.width = 8;
  c.max_src_span = 2;
  c.max_tgt_segment = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.ff_width = 8;
  c.dropout = 0.0;
  c.max_decode_length = 5;
  return c;
}

/// Vocabulary w0..w{n-1}, ids Special::kCount onwards.
inline Vocabulary word_vocab(std::size_t n, const std::string& prefix = "w") {
  std::vector<TokenSeq> corpus(1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < n - i; ++r) corpus[0].push_back(prefix + std::to_string(i));
  return Vocabulary::build(corpus, 1);
}

/// Random ids over UNK and the ordinary words of a vocabulary of `vocab`.
inline std::vector<int> random_ids(Rng& rng, std::size_t length, std::size_t vocab) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < length; ++i)
    ids.push_back(rng.bernoulli(0.2) ? Special::kUnk
                                     : static_cast<int>(Special::kCount + rng.index(vocab - Special::kCount)));
  return ids;
}

/// A decoder whose attention and raw symbol scores come from callbacks of
/// the emitted prefix. Masking follows the model's rules.
class StubDecoder {
 public:
  using Context = std::vector<int>;  // the emitted prefix
  struct Attention {
    std::vector<double> weights;
    Context context;
  };
  using AttentionFn = std::function<std::vector<double>(std::span<const int> prefix)>;
  using ScoreFn = std::function<std::vector<double>(std::span<const int> prefix, std::span<const int> open)>;

  StubDecoder(Vocabulary vocab, std::vector<SourceSpan> spans, std::size_t max_segment,
              std::size_t max_length, AttentionFn attention, ScoreFn scores)
      : vocab_(std::move(vocab)),
        spans_(std::move(spans)),
        max_segment_(max_segment),
        max_length_(max_length),
        attention_(std::move(attention)),
        scores_(std::move(scores)) {}

  Attention attend(std::span<const int> prefix) const {
    return {attention_(prefix), Context(prefix.begin(), prefix.end())};
  }

  std::vector<double> next_logprobs(const Context& ctx, std::span<const int> open) const {
    return logprobs(ctx, open, true);
  }

  double segment_logprob(const Context& ctx, std::span<const int> ids) const {
    const bool cap = ids.size() <= max_segment_;
    double total = 0;
    std::vector<int> open;
    for (int id : ids) {
      total += logprobs(ctx, open, cap)[static_cast<std::size_t>(id)];
      open.push_back(id);
    }
    return total + logprobs(ctx, open, cap)[Special::kSegEnd];
  }

  const std::vector<SourceSpan>& spans() const { return spans_; }
  std::size_t max_length() const { return max_length_; }
  std::size_t max_segment() const { return max_segment_; }
  int feed_id(const std::string& w) const { return vocab_.id(w); }
  std::string word(int id) const { return vocab_.token(id); }
  const Vocabulary& vocab() const { return vocab_; }

  mutable std::size_t queries = 0;

 private:
  std::vector<double> logprobs(const Context& ctx, std::span<const int> open, bool cap) const {
    ++queries;
    std::vector<int> prefix = ctx;
    prefix.insert(prefix.end(), open.begin(), open.end());
    const auto raw = scores_(prefix, open);
    std::vector<double> out(vocab_.size(), kNegInf);
    double max = kNegInf;
    for (std::size_t c = 0; c < out.size(); ++c)
      if (allowed(open.size(), static_cast<int>(c), cap)) max = std::max(max, out[c] = raw.at(c));
    double sum = 0;
    for (double v : out) sum += std::exp(v - max);
    const double log_z = max + std::log(sum);
    for (double& v : out) v -= log_z;
    return out;
  }

  bool allowed(std::size_t position, int id, bool cap) const {
    if (id == Special::kPad || id == Special::kBos) return false;
    const bool closer = id == Special::kSegEnd || id == Special::kEos;
    if (position == 0) return !closer;
    if (cap && position >= max_segment_) return closer;
    return true;
  }

  Vocabulary vocab_;
  std::vector<SourceSpan> spans_;
  std::size_t max_segment_, max_length_;
  AttentionFn attention_;
  ScoreFn scores_;
};

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h * 0xff51afd7ed558ccdULL;
}

/// Scores drawn afresh for every (prefix, open length) from a seeded hash.
inline StubDecoder random_stub(std::uint64_t seed, std::size_t words, std::size_t source_length,
                               std::size_t max_segment, std::size_t max_length, double spread = 2.0) {
  auto spans = enumerate_spans(source_length, 2);
  const std::size_t vocab = Special::kCount + words, span_count = spans.size();
  auto hash_rng = [seed](std::span<const int> prefix, std::size_t extra) {
    std::uint64_t h = mix(seed, extra);
    for (int id : prefix) h = mix(h, static_cast<std::uint64_t>(id));
    return Rng(h);
  };
  return StubDecoder(
      word_vocab(words), spans, max_segment, max_length,
      [=](std::span<const int> prefix) {
        Rng rng = hash_rng(prefix, 0x5eed);
        std::vector<double> w(span_count);
        double sum = 0;
        for (double& v : w) sum += v = rng.uniform(0.01, 1.0);
        for (double& v : w) v /= sum;
        return w;
      },
      [=](std::span<const int> prefix, std::span<const int> open) {
        Rng rng = hash_rng(prefix, 1000 + open.size());
        std::vector<double> s(vocab);
        for (double& v : s) v = rng.uniform(-spread, spread);
        return s;
      });
}

struct BestPath {
  std::vector<int> ids;
  double score = kNegInf;
};

/// Exhaustive search over every symbol path with at most `horizon` words:
/// the best eos-terminated path under the decoder's own distributions.
template <SegmentDecoderModel D>
BestPath exhaustive_best(const D& model, std::size_t horizon) {
  BestPath best;
  std::vector<int> ids;
  std::function<void(const typename D::Attention&, std::vector<int>&, double)> open_segment;
  std::function<void(double)> new_segment = [&](double score) {
    auto att = model.attend(ids);
    std::vector<int> open;
    open_segment(att, open, score);
  };
  open_segment = [&](const typename D::Attention& att, std::vector<int>& open, double score) {
    const auto lp = model.next_logprobs(att.context, open);
    for (std::size_t s = 0; s < lp.size(); ++s) {
      if (!std::isfinite(lp[s])) continue;
      const double next = score + lp[s];
      if (s == Special::kEos) {
        if (next > best.score) best = {ids, next};
      } else if (s == Special::kSegEnd) {
        new_segment(next);
      } else if (ids.size() < horizon) {
        ids.push_back(static_cast<int>(s));
        open.push_back(static_cast<int>(s));
        open_segment(att, open, next);
        open.pop_back();
        ids.pop_back();
      }
    }
  };
  new_segment(0.0);
  return best;
}

/// The same optimum computed through the training-time segment table:
/// every target of up to `horizon` words over the emittable ids, scored
/// under every segmentation.
template <typename T>
BestPath exhaustive_best_by_table(const Np2mtModel<T>& model, std::span<const int> source,
                                  std::size_t horizon) {
  std::vector<int> symbols{Special::kUnk};
  for (std::size_t id = Special::kCount; id < model.config().tgt_vocab; ++id)
    symbols.push_back(static_cast<int>(id));
  BestPath best;
  std::vector<int> target;
  std::function<void()> rec = [&] {
    if (!target.empty()) {
      Tape<T> tape(TapeOptions{.grad_enabled = false});
      auto table = build_segment_scores(tape, model, source, target);
      enumerate_segmentations(target.size(), table.max_segment, [&](const std::vector<std::size_t>& parts) {
        double score = 0;
        std::size_t start = 0;
        for (std::size_t len : parts) {
          score += table.used_value(start, start + len);
          start += len;
        }
        if (score > best.score) best = {target, score};
      });
    }
    if (target.size() == horizon) return;
    for (int s : symbols) {
      target.push_back(s);
      rec();
      target.pop_back();
    }
  };
  rec();
  return best;
}

}  // namespace np2mt::test
