#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/data/dictionary.hpp"
#include "np2mt/decode/decoding.hpp"
#include "np2mt/decode/translate.hpp"
#include "np2mt/dp/segmental_dp.hpp"
#include "test_support.hpp"

namespace np2mt {
namespace {

using test::StubDecoder;

std::vector<double> one_hot_scores(std::size_t vocab, int winner) {
  std::vector<double> s(vocab, 0.0);
  s[static_cast<std::size_t>(winner)] = 10.0;
  return s;
}

// Always prefers `word`, then eos once `word` has been emitted `count` times.
StubDecoder scripted(const Vocabulary& vocab, const std::string& word, std::size_t count,
                     std::size_t max_length) {
  const int id = vocab.id(word);
  const std::size_t size = vocab.size();
  return StubDecoder(
      vocab, enumerate_spans(3, 2), 4, max_length,
      [](std::span<const int>) { return std::vector<double>{0.5, 0.1, 0.1, 0.1, 0.2}; },
      [=](std::span<const int> prefix, std::span<const int> open) {
        if (prefix.size() < count || open.empty()) return one_hot_scores(size, id);
        return one_hot_scores(size, Special::kEos);
      });
}

TEST(GreedyDecode, EmitsTokenThenEos) {
  auto vocab = test::word_vocab(3);
  auto stub = scripted(vocab, "w1", 1, 10);
  auto out = greedy_decode(stub);
  EXPECT_EQ(out.words, TokenSeq{"w1"});
  EXPECT_FALSE(out.truncated);
  ASSERT_EQ(out.trace.segments.size(), 1u);
  EXPECT_EQ(out.trace.segments[0].span, (SourceSpan{1, 1}));
  EXPECT_DOUBLE_EQ(out.trace.segments[0].weight, 0.5);
}

TEST(GreedyDecode, NeverEndingStubIsTruncated) {
  auto vocab = test::word_vocab(3);
  auto stub = scripted(vocab, "w2", 1000, 5);
  auto out = greedy_decode(stub);
  EXPECT_EQ(out.words.size(), 5u);
  EXPECT_TRUE(out.truncated);
  EXPECT_EQ(out.trace.sentence(), out.words);
}

TEST(GreedyDecode, SegmentsRespectLengthCap) {
  auto vocab = test::word_vocab(3);
  auto stub = scripted(vocab, "w0", 9, 20);
  auto out = greedy_decode(stub);
  EXPECT_EQ(out.words.size(), 9u);
  for (const auto& seg : out.trace.segments) EXPECT_LE(seg.words.size(), 4u);
}

TEST(GreedyDecode, ScoreIsSumOfSymbolLogprobs) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto stub = test::random_stub(seed, 3, 4, 2, 50);
    auto out = greedy_decode(stub);
    ASSERT_FALSE(out.truncated);
    double total = 0;
    std::vector<int> prefix;
    for (std::size_t s = 0; s < out.trace.segments.size(); ++s) {
      const auto& seg = out.trace.segments[s];
      auto att = stub.attend(prefix);
      std::vector<int> open;
      for (const auto& w : seg.words) {
        const int id = stub.feed_id(w);
        total += stub.next_logprobs(att.context, open)[static_cast<std::size_t>(id)];
        open.push_back(id);
      }
      const bool last = s + 1 == out.trace.segments.size();
      total += stub.next_logprobs(att.context, open)[last ? Special::kEos : Special::kSegEnd];
      prefix.insert(prefix.end(), open.begin(), open.end());
    }
    EXPECT_NEAR(out.score, total, 1e-12) << "seed " << seed;
  }
}

TEST(GreedyDecode, ModelOutputIsDeterministic) {
  auto config = test::tiny_config();
  config.max_decode_length = 12;
  Np2mtModel<double> a(config, 5), b(config, 5);
  auto vocab = test::word_vocab(3);
  std::vector<int> source{5, 6, Special::kUnk, 7};
  auto x = greedy_decode(ModelDecoder<double>(a, source, vocab));
  auto y = greedy_decode(ModelDecoder<double>(b, source, vocab));
  EXPECT_EQ(x.ids, y.ids);
  EXPECT_EQ(x.trace, y.trace);
  EXPECT_EQ(x.score, y.score);
}

TEST(GreedyDecode, TraceConcatenationEqualsOutput) {
  auto config = test::tiny_config();
  config.max_decode_length = 12;
  auto vocab = test::word_vocab(3);
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Np2mtModel<double> model(config, seed);
    auto source = test::random_ids(rng, 4, config.src_vocab);
    auto out = greedy_decode(ModelDecoder<double>(model, source, vocab));
    EXPECT_EQ(out.trace.sentence(), out.words);
    for (const auto& seg : out.trace.segments) EXPECT_FALSE(seg.words.empty());
  }
}

TEST(ModelDecoder, RejectsVocabularyMismatch) {
  Np2mtModel<double> model(test::tiny_config(), 1);
  std::vector<int> source{5};
  EXPECT_THROW(ModelDecoder<double>(model, source, test::word_vocab(4)), std::invalid_argument);
}

TEST(BeamSearch, BeamOneEqualsGreedyOnStubs) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto stub = test::random_stub(seed, 3, 4, 2, 6);
    auto g = greedy_decode(stub);
    auto b = beam_search(stub, 1);
    EXPECT_EQ(b.ids, g.ids) << "seed " << seed;
    EXPECT_EQ(b.truncated, g.truncated) << "seed " << seed;
    EXPECT_NEAR(b.score, g.score, 1e-12) << "seed " << seed;
    EXPECT_EQ(b.trace.sentence(), b.words);
  }
}

TEST(BeamSearch, BeamOneEqualsGreedyOnModel) {
  auto config = test::tiny_config();
  config.max_decode_length = 10;
  auto vocab = test::word_vocab(3);
  Rng rng(11);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Np2mtModel<double> model(config, seed);
    auto source = test::random_ids(rng, 1 + rng.index(5), config.src_vocab);
    ModelDecoder<double> dec(model, source, vocab);
    auto g = greedy_decode(dec);
    auto b = beam_search(dec, 1);
    EXPECT_EQ(b.ids, g.ids);
    EXPECT_EQ(b.trace, g.trace);
  }
}

TEST(BeamSearch, SaturatingBeamMatchesExhaustiveSearchOnStubs) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto stub = test::random_stub(seed, 3, 3, 2, 5);
    auto best = test::exhaustive_best(stub, 5);
    auto out = beam_search(stub, 100000);
    EXPECT_EQ(out.ids, best.ids) << "seed " << seed;
    EXPECT_NEAR(out.score, best.score, 1e-12) << "seed " << seed;
    EXPECT_FALSE(out.truncated);
  }
}

TEST(BeamSearch, SaturatingBeamMatchesSegmentTableOracleOnModel) {
  auto config = test::tiny_config();
  auto vocab = test::word_vocab(3);
  Rng rng(17);
  for (std::uint64_t seed = 100; seed < 103; ++seed) {
    Np2mtModel<double> model(config, seed);
    auto source = test::random_ids(rng, 3, config.src_vocab);
    auto best = test::exhaustive_best_by_table(model, source, 5);
    auto out = beam_search(ModelDecoder<double>(model, source, vocab), 100000, 5);
    EXPECT_EQ(out.ids, best.ids) << "seed " << seed;
    EXPECT_NEAR(out.score, best.score, 1e-9) << "seed " << seed;
  }
}

TEST(BeamSearch, StoredScoreMatchesRecomputation) {
  auto config = test::tiny_config();
  config.max_decode_length = 8;
  auto vocab = test::word_vocab(3);
  Rng rng(23);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Np2mtModel<double> model(config, seed);
    auto source = test::random_ids(rng, 4, config.src_vocab);
    auto out = beam_search(ModelDecoder<double>(model, source, vocab), 3);
    ASSERT_FALSE(out.truncated);
    Tape<double> tape(TapeOptions{.grad_enabled = false});
    auto table = build_segment_scores(tape, model, source, out.ids);
    double total = 0;
    std::size_t start = 0;
    for (const auto& seg : out.trace.segments) {
      total += table.used_value(start, start + seg.words.size());
      start += seg.words.size();
    }
    EXPECT_EQ(start, out.ids.size());
    EXPECT_NEAR(out.score, total, 1e-10);
  }
}

TEST(BeamSearch, WiderBeamNeverScoresWorseOnTinyInstances) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto stub = test::random_stub(seed, 2, 3, 2, 12);
    double previous = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= 6; ++k) {
      auto out = beam_search(stub, k);
      ASSERT_FALSE(out.truncated);
      EXPECT_GE(out.score, previous - 1e-12) << "seed " << seed << " k " << k;
      previous = out.score;
    }
  }
}

TEST(BeamSearch, TruncatedHypothesisReturnedWhenNothingFinishes) {
  auto vocab = test::word_vocab(3);
  auto stub = scripted(vocab, "w2", 1000, 5);
  auto out = beam_search(stub, 1);
  EXPECT_TRUE(out.truncated);
  EXPECT_EQ(out.words.size(), 5u);
}

TEST(BeamSearch, RejectsZeroBeam) {
  auto stub = test::random_stub(1, 3, 3, 2, 5);
  EXPECT_THROW(beam_search(stub, 0), std::invalid_argument);
}

// Source "sie sehen das kolosseum" with "kolosseum" masked; attention peaks
// on span 3-4 for the first segment and on 1-2 (index 4) afterwards.
struct KolosseumFixture {
  Vocabulary target = [] {
    std::vector<TokenSeq> corpus{{"you", "you", "see", "the", "the"}};
    return Vocabulary::build(corpus, 1);
  }();
  Sentence source{{"sie", "sehen", "das", "kolosseum"}, {5, 6, 7, Special::kUnk}};
  std::vector<SourceSpan> spans = enumerate_spans(4, 2);

  StubDecoder decoder(std::size_t peak_first = 6 /* span 3-4 */) const {
    const auto vocab = target;
    const std::size_t span_count = spans.size();
    return StubDecoder(
        target, spans, 4, 10,
        [=](std::span<const int> prefix) {
          std::vector<double> w(span_count, 0.05);
          w[prefix.empty() ? peak_first : 4] = 1.0;
          return w;
        },
        [=](std::span<const int> prefix, std::span<const int> open) {
          if (prefix.empty()) return one_hot_scores(vocab.size(), vocab.id("the"));
          if (prefix.size() < 4 && open.empty()) return one_hot_scores(vocab.size(), vocab.id("you"));
          return one_hot_scores(vocab.size(), prefix.size() >= 4 ? Special::kEos : Special::kSegEnd);
        });
  }
};

TEST(DictDecode, MaskedNounIsTranslatedFromDictionary) {
  KolosseumFixture fx;
  ASSERT_EQ(fx.spans[6], (SourceSpan{3, 4}));
  auto dict = PhraseDictionary::from_text("das kolosseum\tthe colosseum\n");
  auto out = dict_greedy_decode(fx.decoder(), fx.source, dict);
  ASSERT_FALSE(out.trace.segments.empty());
  const auto& first = out.trace.segments.front();
  EXPECT_TRUE(first.dictionary);
  EXPECT_EQ(first.span, (SourceSpan{3, 4}));
  EXPECT_EQ(first.words, (TokenSeq{"the", "colosseum"}));
  EXPECT_EQ(out.ids[1], Special::kUnk);  // "colosseum" is fed back as UNK
  EXPECT_EQ(out.trace.sentence(), out.words);
  for (std::size_t s = 1; s < out.trace.segments.size(); ++s) EXPECT_FALSE(out.trace.segments[s].dictionary);
}

TEST(DictDecode, UnkSpanMissingFromDictionaryFallsThrough) {
  KolosseumFixture fx;
  auto dict = PhraseDictionary::from_text("kolosseum\tcolosseum\n");
  auto out = dict_greedy_decode(fx.decoder(), fx.source, dict);
  auto greedy = greedy_decode(fx.decoder());
  EXPECT_EQ(out.words, greedy.words);
  for (const auto& seg : out.trace.segments) EXPECT_FALSE(seg.dictionary);
}

TEST(DictDecode, KeyWithoutUnkIsNotLookedUp) {
  KolosseumFixture fx;
  auto dict = PhraseDictionary::from_text("sie sehen\tthey see\n");
  auto out = dict_greedy_decode(fx.decoder(4 /* span 1-2 */), fx.source, dict);
  for (const auto& seg : out.trace.segments) EXPECT_FALSE(seg.dictionary);
}

TEST(DictDecode, EmptyDictionaryIsNeutral) {
  PhraseDictionary empty;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto stub = test::random_stub(seed, 3, 4, 2, 8);
    Sentence source{{"a", "b", "c", "d"}, {5, Special::kUnk, 6, Special::kUnk}};
    auto d = dict_greedy_decode(stub, source, empty);
    auto g = greedy_decode(stub);
    EXPECT_EQ(d.words, g.words);
    EXPECT_EQ(d.trace, g.trace);
  }
  auto config = test::tiny_config();
  config.max_decode_length = 10;
  Np2mtModel<double> model(config, 4);
  auto vocab = test::word_vocab(3);
  Sentence source{{"a", "b", "c"}, {5, Special::kUnk, 7}};
  ModelDecoder<double> dec(model, source.ids, vocab);
  EXPECT_EQ(dict_greedy_decode(dec, source, empty).words, greedy_decode(dec).words);
}

TEST(DictDecode, NoUnkInSourceMatchesGreedy) {
  auto dict = PhraseDictionary::from_text("a\tw0\nb\tw1\na b\tw2\n");
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto stub = test::random_stub(seed, 3, 3, 2, 8);
    Sentence source{{"a", "b", "c"}, {5, 6, 7}};
    EXPECT_EQ(dict_greedy_decode(stub, source, dict).words, greedy_decode(stub).words);
  }
}

TEST(DictDecode, SpanIsTranslatedAtMostOnce) {
  KolosseumFixture fx;
  auto dict = PhraseDictionary::from_text("das kolosseum\tthe colosseum\n");
  // Attention never leaves span 3-4.
  auto vocab = fx.target;
  StubDecoder stuck(
      fx.target, fx.spans, 4, 10,
      [n = fx.spans.size()](std::span<const int>) {
        std::vector<double> w(n, 0.05);
        w[6] = 1.0;
        return w;
      },
      [=](std::span<const int>, std::span<const int> open) {
        return one_hot_scores(vocab.size(), open.empty() ? vocab.id("you") : Special::kEos);
      });
  auto out = dict_greedy_decode(stuck, fx.source, dict);
  EXPECT_FALSE(out.truncated);
  EXPECT_EQ(out.words, (TokenSeq{"the", "colosseum", "you"}));
}

TEST(DictDecode, RequiresRawSurfaces) {
  auto stub = test::random_stub(1, 3, 2, 2, 5);
  Sentence ids_only{{}, {5, 6}};
  EXPECT_THROW(dict_greedy_decode(stub, ids_only, PhraseDictionary{}), std::invalid_argument);
}

TEST(DictionaryCandidates, SingleCandidateIsReturned) {
  auto stub = test::random_stub(2, 3, 2, 2, 5);
  auto att = stub.attend({});
  std::vector<std::vector<int>> c{{5, 6}};
  auto choice = score_dictionary_candidates(stub, att.context, c);
  EXPECT_EQ(choice.index, 0u);
  EXPECT_NEAR(choice.scores[0], stub.segment_logprob(att.context, c[0]), 1e-15);
}

TEST(DictionaryCandidates, HigherScoreWinsAndTiesGoToFirst) {
  auto vocab = test::word_vocab(3);
  // w0 scores above w1, and w2 ties with w0.
  StubDecoder stub(
      vocab, enumerate_spans(2, 2), 4, 10, [](std::span<const int>) { return std::vector<double>{1, 0, 0}; },
      [](std::span<const int>, std::span<const int> open) {
        std::vector<double> s(8, 0.0);
        if (open.empty()) s[5] = s[7] = 2.0;
        return s;
      });
  auto att = stub.attend({});
  std::vector<std::vector<int>> c{{6}, {5}, {7}};
  auto choice = score_dictionary_candidates(stub, att.context, c);
  EXPECT_EQ(choice.index, 1u);
  EXPECT_GT(choice.scores[1], choice.scores[0]);
  EXPECT_EQ(choice.scores[1], choice.scores[2]);
  EXPECT_THROW(score_dictionary_candidates(stub, att.context, std::vector<std::vector<int>>{}),
               std::invalid_argument);
}

TEST(DictionaryCandidates, OutOfVocabularyCandidateIsScoredAsUnk) {
  auto config = test::tiny_config();
  Np2mtModel<double> model(config, 9);
  auto vocab = test::word_vocab(3);
  std::vector<int> source{5, Special::kUnk};
  ModelDecoder<double> dec(model, source, vocab);
  auto att = dec.attend({});
  std::vector<std::vector<int>> c{{dec.feed_id("w0"), dec.feed_id("zebra")}, {dec.feed_id("w0"), Special::kUnk}};
  auto choice = score_dictionary_candidates(dec, att.context, c);
  EXPECT_TRUE(std::isfinite(choice.scores[0]));
  EXPECT_EQ(choice.scores[0], choice.scores[1]);
}

TEST(DictionaryCandidates, LongCandidateIsScoredWithoutSegmentCap) {
  auto config = test::tiny_config();
  Np2mtModel<double> model(config, 9);
  auto vocab = test::word_vocab(3);
  std::vector<int> source{5, 6};
  ModelDecoder<double> dec(model, source, vocab);
  auto att = dec.attend({});
  EXPECT_TRUE(std::isfinite(dec.segment_logprob(att.context, std::vector<int>{5, 6, 7, 5})));
}

TEST(Trace, TextRoundTrip) {
  DecodeTrace t;
  t.segments.push_back({{3, 4}, 0.4171239, true, {"the", "colosseum"}});
  t.segments.push_back({{1, 1}, 0.25, false, {"you"}});
  const std::string text = t.to_text();
  EXPECT_EQ(text, "3-4\t0.417124\t1\tthe colosseum\n1-1\t0.250000\t0\tyou\n");
  auto back = DecodeTrace::from_text(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.sentence(), (TokenSeq{"the", "colosseum", "you"}));
  EXPECT_THROW(DecodeTrace::from_text("1-1\t0.5\n"), std::runtime_error);
}

TEST(Translate, ParallelOutputKeepsInputOrder) {
  auto config = test::tiny_config();
  config.max_decode_length = 8;
  Np2mtModel<double> model(config, 2);
  auto vocab = test::word_vocab(3);
  Rng rng(5);
  std::vector<Sentence> sources;
  for (int i = 0; i < 12; ++i) {
    Sentence s;
    s.ids = test::random_ids(rng, 1 + rng.index(4), config.src_vocab);
    for (int id : s.ids) s.raw.push_back("x" + std::to_string(id));
    sources.push_back(s);
  }
  TranslateOptions serial, parallel;
  parallel.threads = 4;
  auto a = translate_all(model, std::span<const Sentence>(sources), vocab, serial);
  auto b = translate_all(model, std::span<const Sentence>(sources), vocab, parallel);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].ids, b[i].ids);
    EXPECT_EQ(a[i].ids, greedy_decode(ModelDecoder<double>(model, sources[i].ids, vocab)).ids);
  }
  TranslateOptions dict_mode;
  dict_mode.mode = DecodeMode::dict;
  EXPECT_THROW(translate_all(model, std::span<const Sentence>(sources), vocab, dict_mode), std::invalid_argument);
  EXPECT_THROW(parse_decode_mode("sample"), std::invalid_argument);
}

}  // namespace
}  // namespace np2mt
