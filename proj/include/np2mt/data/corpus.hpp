#pragma once

#include <cstddef>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/data/vocabulary.hpp"

namespace np2mt {

inline TokenSeq tokenize(const std::string& line) {
  TokenSeq out;
  std::istringstream in(line);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline std::string join(std::span<const std::string> words, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

/// Raw surface tokens and, once masked, their vocabulary ids.
struct Sentence {
  TokenSeq raw;
  std::vector<int> ids;

  bool has_unk() const {
    for (int id : ids)
      if (id == Special::kUnk) return true;
    return false;
  }
};

struct SentencePair {
  Sentence source;
  Sentence target;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::size_t dropped = 0;  // pairs removed at load time

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  std::vector<TokenSeq> source_side() const {
    std::vector<TokenSeq> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.source.raw);
    return out;
  }

  std::vector<TokenSeq> target_side() const {
    std::vector<TokenSeq> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.target.raw);
    return out;
  }
};

struct LoadOptions {
  std::size_t max_len = 175;  // pairs with a longer side are dropped
  std::ostream* warnings = &std::cerr;
};

inline ParallelCorpus read_parallel(std::istream& src, std::istream& tgt,
                                    const LoadOptions& options = {}) {
  ParallelCorpus corpus;
  std::string s, t;
  std::size_t line = 0, too_long = 0, empty = 0;
  while (true) {
    const bool has_s = static_cast<bool>(std::getline(src, s));
    const bool has_t = static_cast<bool>(std::getline(tgt, t));
    if (!has_s && !has_t) break;
    ++line;
    if (has_s != has_t)
      throw std::runtime_error("parallel corpus sides differ in length at line " +
                               std::to_string(line));
    SentencePair pair{{tokenize(s), {}}, {tokenize(t), {}}};
    if (pair.source.raw.empty() || pair.target.raw.empty()) {
      ++empty;
      continue;
    }
    if (pair.source.raw.size() > options.max_len || pair.target.raw.size() > options.max_len) {
      ++too_long;
      continue;
    }
    corpus.pairs.push_back(std::move(pair));
  }
  corpus.dropped = too_long + empty;
  if (options.warnings && too_long)
    *options.warnings << "warning: dropped " << too_long << " pair(s) longer than "
                      << options.max_len << " tokens\n";
  if (options.warnings && empty)
    *options.warnings << "warning: dropped " << empty << " pair(s) with an empty side\n";
  return corpus;
}

inline ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                                    const LoadOptions& options = {}) {
  std::ifstream src(src_path), tgt(tgt_path);
  if (!src) throw std::runtime_error("cannot read " + src_path);
  if (!tgt) throw std::runtime_error("cannot read " + tgt_path);
  return read_parallel(src, tgt, options);
}

/// Reads one sentence per line; empty lines are kept as empty sentences.
inline std::vector<TokenSeq> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<TokenSeq> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(tokenize(line));
  return out;
}

inline void mask_sentence(Sentence& s, const Vocabulary& vocab) { s.ids = vocab.encode(s.raw); }

inline Sentence masked(const TokenSeq& raw, const Vocabulary& vocab) {
  return {raw, vocab.encode(raw)};
}

/// Assigns ids from the raw surfaces; unknown words become UNK.
inline void apply_unk_mask(ParallelCorpus& corpus, const Vocabulary& src_vocab,
                           const Vocabulary& tgt_vocab) {
  for (auto& p : corpus.pairs) {
    mask_sentence(p.source, src_vocab);
    mask_sentence(p.target, tgt_vocab);
  }
}

/// Fraction of tokens that map to UNK.
inline double oov_rate(std::span<const TokenSeq> side, const Vocabulary& vocab) {
  std::size_t total = 0, unknown = 0;
  for (const auto& s : side)
    for (const auto& w : s) {
      ++total;
      if (vocab.id(w) == Special::kUnk) ++unknown;
    }
  if (total == 0) throw std::invalid_argument("oov_rate of an empty corpus");
  return static_cast<double>(unknown) / static_cast<double>(total);
}

}  // namespace np2mt
