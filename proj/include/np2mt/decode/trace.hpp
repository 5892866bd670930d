#pragma once

#include <cstddef>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/model/model.hpp"

namespace np2mt {

/// One emitted segment: the source span attended when it started, that
/// span's attention weight, and whether the words came from the dictionary.
struct TraceSegment {
  SourceSpan span;
  double weight = 0.0;
  bool dictionary = false;
  TokenSeq words;

  friend bool operator==(const TraceSegment&, const TraceSegment&) = default;
};

struct DecodeTrace {
  std::vector<TraceSegment> segments;

  TokenSeq sentence() const {
    TokenSeq out;
    for (const auto& s : segments) out.insert(out.end(), s.words.begin(), s.words.end());
    return out;
  }

  /// `i-j<TAB>weight<TAB>dict<TAB>words`, one segment per line.
  std::string to_text() const {
    std::string out;
    char weight[32];
    for (const auto& s : segments) {
      std::snprintf(weight, sizeof weight, "%.6f", s.weight);
      out += std::to_string(s.span.begin) + "-" + std::to_string(s.span.end) + "\t" + weight +
             "\t" + (s.dictionary ? "1" : "0") + "\t" + join(s.words) + "\n";
    }
    return out;
  }

  static DecodeTrace from_text(const std::string& text) {
    DecodeTrace trace;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string span, weight, flag, words;
      if (!std::getline(fields, span, '\t') || !std::getline(fields, weight, '\t') ||
          !std::getline(fields, flag, '\t') || !std::getline(fields, words))
        throw std::runtime_error("malformed trace line: " + line);
      auto dash = span.find('-');
      if (dash == std::string::npos) throw std::runtime_error("malformed span: " + span);
      TraceSegment seg;
      seg.span = {std::stoul(span.substr(0, dash)), std::stoul(span.substr(dash + 1))};
      seg.weight = std::stod(weight);
      seg.dictionary = flag == "1";
      seg.words = tokenize(words);
      trace.segments.push_back(std::move(seg));
    }
    return trace;
  }

  friend bool operator==(const DecodeTrace&, const DecodeTrace&) = default;
};

}  // namespace np2mt
