#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace np2mt {

/// Reserved ids shared by source and target vocabularies.
struct Special {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kSegEnd = 3;  // closes a target segment
  static constexpr int kEos = 4;     // closes the final segment and the sentence
  static constexpr int kCount = 5;
};

inline const std::array<std::string, Special::kCount>& reserved_tokens() {
  static const std::array<std::string, Special::kCount> names = {"<pad>", "<unk>", "<s>",
                                                                 "<$>", "</s>"};
  return names;
}

using TokenSeq = std::vector<std::string>;

/// Token <-> id bijection. Ids 0..4 are reserved; ordinary tokens follow.
class Vocabulary {
 public:
  Vocabulary() {
    for (const auto& t : reserved_tokens()) insert(t);
  }

  /// Keeps tokens seen at least `threshold` times, ordered by descending
  /// count with lexicographic tie-breaking.
  static Vocabulary build(std::span<const TokenSeq> sentences, std::size_t threshold) {
    if (threshold < 1) throw std::invalid_argument("vocabulary threshold must be >= 1");
    if (sentences.empty()) throw std::invalid_argument("cannot build vocabulary from empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sentences)
      for (const auto& w : s) ++counts[w];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [w, c] : counts)
      if (c >= threshold && !is_reserved(w)) kept.emplace_back(w, c);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [w, c] : kept) v.insert(w);
    return v;
  }

  static bool is_reserved(const std::string& token) {
    const auto& r = reserved_tokens();
    return std::find(r.begin(), r.end(), token) != r.end();
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  /// Unknown words, and text that spells a reserved symbol, map to UNK.
  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() || it->second < Special::kCount ? Special::kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<int> encode(std::span<const std::string> words) const {
    std::vector<int> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
  }

  TokenSeq decode(std::span<const int> ids) const {
    TokenSeq out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
  }

  /// Ordinary tokens only, one per line.
  std::string to_text() const {
    std::string out;
    for (std::size_t i = Special::kCount; i < tokens_.size(); ++i) {
      out += tokens_[i];
      out += '\n';
    }
    return out;
  }

  static Vocabulary from_text(const std::string& text) {
    Vocabulary v;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line.find_first_of(" \t") != std::string::npos ||
          is_reserved(line) || v.contains(line))
        throw std::runtime_error("vocabulary line " + std::to_string(lineno) +
                                 ": invalid or duplicate token '" + line + "'");
      v.insert(line);
    }
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary " + path);
    out << to_text();
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocabulary " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  void insert(const std::string& token) {
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace np2mt
