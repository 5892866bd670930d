#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/data/dictionary.hpp"
#include "np2mt/decode/decoding.hpp"

namespace np2mt {

enum class DecodeMode { greedy, beam, dict };

inline DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "greedy") return DecodeMode::greedy;
  if (name == "beam") return DecodeMode::beam;
  if (name == "dict") return DecodeMode::dict;
  throw std::invalid_argument("unknown decode mode: " + name);
}

struct TranslateOptions {
  DecodeMode mode = DecodeMode::greedy;
  std::size_t beam = 5;
  const PhraseDictionary* dictionary = nullptr;  // required for dict mode
  std::size_t threads = 1;
};

template <typename T>
DecodeResult translate_sentence(const Np2mtModel<T>& model, const Sentence& source,
                                const Vocabulary& target_vocab, const TranslateOptions& opts) {
  ModelDecoder<T> decoder(model, source.ids, target_vocab);
  switch (opts.mode) {
    case DecodeMode::greedy:
      return greedy_decode(decoder);
    case DecodeMode::beam:
      return beam_search(decoder, opts.beam);
    case DecodeMode::dict:
      if (!opts.dictionary) throw std::invalid_argument("dict mode needs a dictionary");
      return dict_greedy_decode(decoder, source, *opts.dictionary);
  }
  throw std::logic_error("unhandled decode mode");
}

/// Decodes every sentence; results keep the input order whatever the
/// thread count. The first exception thrown by a worker is rethrown.
template <typename T>
std::vector<DecodeResult> translate_all(const Np2mtModel<T>& model, std::span<const Sentence> sources,
                                        const Vocabulary& target_vocab, const TranslateOptions& opts) {
  std::vector<DecodeResult> results(sources.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < sources.size(); i = next++) {
      try {
        results[i] = translate_sentence(model, sources[i], target_vocab, opts);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = sources.size();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(1, sources.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace np2mt
