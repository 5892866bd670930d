#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/data/dictionary.hpp"
#include "np2mt/data/vocabulary.hpp"
#include "np2mt/numerics/random.hpp"

// Synthetic monotone phrase-mapping task. Each rule maps either a source
// bigram to a target unigram or a source unigram to a target bigram, with
// tokens private to the rule. Sentences concatenate rule phrases, so the
// correct target is fully determined by the source segmentation. Rules are
// drawn with Zipfian frequencies, which makes frequency thresholds mask the
// tokens of the rarest rules.

namespace np2mt::toy {

struct PhraseRule {
  TokenSeq source;
  TokenSeq target;
};

struct TaskConfig {
  std::size_t rules = 40;
  std::size_t min_phrases = 2;
  std::size_t max_phrases = 4;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 1;
};

class PhraseTask {
 public:
  explicit PhraseTask(const TaskConfig& config) : config_(config) {
    if (config.rules == 0 || config.min_phrases == 0 || config.max_phrases < config.min_phrases)
      throw std::invalid_argument("invalid toy task configuration");
    Rng rng(config.seed);
    std::vector<std::size_t> ids(config.rules);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    rng.shuffle(ids);  // decouple rule type from frequency rank
    double total = 0;
    for (std::size_t r = 0; r < config.rules; ++r) {
      const std::string n = std::to_string(ids[r]);
      if (ids[r] % 2 == 0)
        rules_.push_back({{"s" + n + "a", "s" + n + "b"}, {"t" + n}});
      else
        rules_.push_back({{"s" + n}, {"t" + n + "a", "t" + n + "b"}});
      cumulative_.push_back(total += 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent));
    }
    for (auto& c : cumulative_) c /= total;
  }

  const std::vector<PhraseRule>& rules() const { return rules_; }

  /// Sentence pairs drawn with the given seed; the rule set itself is fixed
  /// by the task seed.
  ParallelCorpus sample(std::size_t pairs, std::uint64_t seed) const {
    Rng rng(seed);
    ParallelCorpus corpus;
    const std::size_t span = config_.max_phrases - config_.min_phrases + 1;
    for (std::size_t n = 0; n < pairs; ++n) {
      SentencePair p;
      const std::size_t phrases = config_.min_phrases + rng.index(span);
      for (std::size_t k = 0; k < phrases; ++k) {
        const PhraseRule& r = rules_[draw(rng)];
        p.source.raw.insert(p.source.raw.end(), r.source.begin(), r.source.end());
        p.target.raw.insert(p.target.raw.end(), r.target.begin(), r.target.end());
      }
      corpus.pairs.push_back(std::move(p));
    }
    return corpus;
  }

  /// Entries for every rule whose source phrase is out of `source_vocab`.
  PhraseDictionary dictionary_for_masked(const Vocabulary& source_vocab) const {
    PhraseDictionary dict;
    for (const auto& r : rules_) {
      bool masked = false;
      for (const auto& w : r.source) masked = masked || source_vocab.id(w) == Special::kUnk;
      if (masked) dict.add(r.source, r.target);
    }
    return dict;
  }

 private:
  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform();
    for (std::size_t i = 0; i < cumulative_.size(); ++i)
      if (u < cumulative_[i]) return i;
    return cumulative_.size() - 1;
  }

  TaskConfig config_;
  std::vector<PhraseRule> rules_;
  std::vector<double> cumulative_;
};

/// Fraction of distinct source token types that `vocab` maps to UNK.
inline double masked_type_fraction(std::span<const TokenSeq> side, const Vocabulary& vocab) {
  std::set<std::string> types, masked;
  for (const auto& s : side)
    for (const auto& w : s) {
      types.insert(w);
      if (vocab.id(w) == Special::kUnk) masked.insert(w);
    }
  return types.empty() ? 0.0 : static_cast<double>(masked.size()) / static_cast<double>(types.size());
}

/// Exact-match accuracy of hypotheses against references.
inline double exact_match(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs) {
  if (hyps.size() != refs.size() || hyps.empty())
    throw std::invalid_argument("exact_match needs equal, non-empty sides");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) hits += hyps[i] == refs[i];
  return static_cast<double>(hits) / static_cast<double>(hyps.size());
}

}  // namespace np2mt::toy
