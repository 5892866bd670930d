#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/decode/trace.hpp"

namespace np2mt {

inline constexpr std::size_t kBleuOrder = 4;

/// Corpus-level n-gram statistics, summed over sentences.
struct BleuStats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  void add(std::span<const std::string> hyp, std::span<const std::string> ref) {
    hyp_length += hyp.size();
    ref_length += ref.size();
    for (std::size_t n = 1; n <= kBleuOrder; ++n) {
      auto counts = [n](std::span<const std::string> s) {
        std::map<std::vector<std::string>, std::size_t> c;
        for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[{s.begin() + i, s.begin() + i + n}];
        return c;
      };
      const auto h = counts(hyp), r = counts(ref);
      for (const auto& [gram, count] : h) {
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(count, it->second);
      }
      if (hyp.size() >= n) totals[n - 1] += hyp.size() - n + 1;
    }
  }

  double precision(std::size_t n, bool smooth = false) const {
    const double add = smooth && n >= 2 ? 1.0 : 0.0;
    const double denom = static_cast<double>(totals.at(n - 1)) + add;
    return denom == 0.0 ? 0.0 : (static_cast<double>(matches[n - 1]) + add) / denom;
  }

  double brevity_penalty() const {
    if (hyp_length == 0) return 0.0;
    if (hyp_length >= ref_length) return 1.0;
    return std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length));
  }

  /// BLEU on the 0-100 scale. `smooth` adds one to the counts of orders 2-4.
  double bleu(bool smooth = false) const {
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= kBleuOrder; ++n) {
      const double p = precision(n, smooth);
      if (p == 0.0) return 0.0;
      log_sum += std::log(p);
    }
    return 100.0 * brevity_penalty() * std::exp(log_sum / kBleuOrder);
  }
};

inline BleuStats bleu_stats(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references) {
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("BLEU needs one reference per hypothesis (" +
                                std::to_string(hypotheses.size()) + " vs " +
                                std::to_string(references.size()) + ")");
  if (hypotheses.empty()) throw std::invalid_argument("BLEU of an empty corpus");
  BleuStats stats;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) stats.add(hypotheses[i], references[i]);
  return stats;
}

inline double bleu_score(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references,
                         bool smooth = false) {
  return bleu_stats(hypotheses, references).bleu(smooth);
}

/// Fraction of emitted target words that came from dictionary segments.
inline double lookup_ratio(std::span<const DecodeTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("lookup ratio of an empty trace set");
  std::size_t dict = 0, total = 0;
  for (const auto& t : traces)
    for (const auto& s : t.segments) {
      total += s.words.size();
      if (s.dictionary) dict += s.words.size();
    }
  return total == 0 ? 0.0 : static_cast<double>(dict) / static_cast<double>(total);
}

/// A sentence's trace as stored by the CLI.
struct TraceRecord {
  DecodeTrace trace;
  bool truncated = false;
};

/// One block per sentence, blocks terminated by an empty line. A block whose
/// first line is `#truncated` belongs to a sentence cut off at the length cap.
inline std::string format_trace_file(std::span<const TraceRecord> records) {
  std::string out;
  for (const auto& r : records) out += (r.truncated ? "#truncated\n" : "") + r.trace.to_text() + "\n";
  return out;
}

inline std::vector<TraceRecord> parse_trace_file(const std::string& text) {
  std::vector<TraceRecord> records;
  TraceRecord current;
  std::string block;
  bool open = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) {
      current.trace = DecodeTrace::from_text(block);
      records.push_back(std::move(current));
      current = {};
      block.clear();
      open = false;
    } else if (line == "#truncated" && !open) {
      current.truncated = true;
      open = true;
    } else {
      block += line + "\n";
      open = true;
    }
  }
  if (open) throw std::runtime_error("trace file does not end with an empty line");
  return records;
}

struct EvalReport {
  double bleu = 0.0;
  std::size_t sentences = 0;
  std::optional<double> src_oov_rate;
  std::optional<double> tgt_oov_rate;
  std::optional<double> lookup_ratio;
  std::optional<std::size_t> truncated;

  void validate() const {
    if (!(bleu >= 0.0 && bleu <= 100.0)) throw std::logic_error("BLEU outside [0, 100]");
    for (const auto& r : {src_oov_rate, tgt_oov_rate, lookup_ratio})
      if (r && !(*r >= 0.0 && *r <= 1.0)) throw std::logic_error("rate outside [0, 1]");
  }

  /// Stable `key<sep>value` lines; absent fields are omitted.
  std::string to_text(char sep = '\t') const {
    validate();
    std::string out;
    auto line = [&](const char* key, const std::string& value) {
      out += key;
      out += sep;
      out += value + "\n";
    };
    auto fixed = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", v);
      return std::string(buf);
    };
    line("bleu", fixed(bleu));
    line("sentences", std::to_string(sentences));
    if (src_oov_rate) line("src_oov_rate", fixed(*src_oov_rate));
    if (tgt_oov_rate) line("tgt_oov_rate", fixed(*tgt_oov_rate));
    if (lookup_ratio) line("lookup_ratio", fixed(*lookup_ratio));
    if (truncated) line("truncated", std::to_string(*truncated));
    return out;
  }
};

}  // namespace np2mt
