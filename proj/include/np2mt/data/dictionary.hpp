#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/data/vocabulary.hpp"

namespace np2mt {

class DictionaryFormatError : public std::runtime_error {
 public:
  DictionaryFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("dictionary line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Exact-match map from source phrases to ordered target candidates.
/// Format: `source phrase<TAB>target phrase[<TAB>score]`, one pair per line.
class PhraseDictionary {
 public:
  struct Entry {
    TokenSeq source;
    TokenSeq target;
    std::optional<std::string> score;  // kept verbatim, unused for ranking
  };

  void add(TokenSeq source, TokenSeq target, std::optional<std::string> score = std::nullopt) {
    if (source.empty() || target.empty()) throw std::invalid_argument("empty dictionary phrase");
    index_[source].push_back(target);
    entries_.push_back({std::move(source), std::move(target), std::move(score)});
  }

  /// Candidates in file order, or nullptr when `phrase` is not a key.
  const std::vector<TokenSeq>* lookup(std::span<const std::string> phrase) const {
    auto it = index_.find(TokenSeq(phrase.begin(), phrase.end()));
    return it == index_.end() ? nullptr : &it->second;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t key_count() const { return index_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  static PhraseDictionary from_text(const std::string& text) {
    PhraseDictionary dict;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::vector<std::string> fields;
      std::size_t start = 0;
      while (true) {
        auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (fields.size() < 2 || fields.size() > 3)
        throw DictionaryFormatError(lineno, "expected 2 or 3 tab-separated fields, got " +
                                                std::to_string(fields.size()));
      TokenSeq src = tokenize(fields[0]), tgt = tokenize(fields[1]);
      if (src.empty()) throw DictionaryFormatError(lineno, "empty source phrase");
      if (tgt.empty()) throw DictionaryFormatError(lineno, "empty target phrase");
      std::optional<std::string> score;
      if (fields.size() == 3) {
        std::size_t used = 0;
        try {
          std::stod(fields[2], &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || used != fields[2].size())
          throw DictionaryFormatError(lineno, "score '" + fields[2] + "' is not a number");
        score = fields[2];
      }
      dict.add(std::move(src), std::move(tgt), std::move(score));
    }
    return dict;
  }

  /// Canonical form: single spaces inside phrases, entries in insertion order.
  std::string to_text() const {
    std::string out;
    for (const auto& e : entries_) {
      out += join(e.source);
      out += '\t';
      out += join(e.target);
      if (e.score) {
        out += '\t';
        out += *e.score;
      }
      out += '\n';
    }
    return out;
  }

  static PhraseDictionary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read dictionary " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dictionary " + path);
    out << to_text();
  }

 private:
  std::vector<Entry> entries_;
  std::map<TokenSeq, std::vector<TokenSeq>> index_;
};

}  // namespace np2mt
