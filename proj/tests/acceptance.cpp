// Acceptance suite: one PASS/FAIL line per primary criterion.
// Usage: acceptance [criterion numbers...]   (default: all of 1-9)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "np2mt/np2mt.hpp"
#include "test_support.hpp"

using namespace np2mt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome dp_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  Tape<double> tape(TapeOptions{.grad_enabled = false});
  double worst = 0;
  const int tables = 200;
  for (int trial = 0; trial < tables; ++trial) {
    const std::size_t len = 1 + rng.index(8), cap = 1 + rng.index(3);
    auto table = constant_score_table<double>(
        tape, len, cap, [&](std::size_t, std::size_t, bool) { return rng.uniform(-6.0, 0.0); });
    const double dp = alpha_forward(tape, table).item();
    worst = std::max(worst, std::abs(dp - std::log(brute_force_marginal(table))));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 10,
          fmt("%d tables, T'<=8, L<=3: max |alpha - log brute| = %.3g (< 1e-9), %.2f s (< 10 s)", tables, worst,
              secs)};
}

Outcome end_to_end_gradient() {
  const auto t0 = std::chrono::steady_clock::now();
  auto c = test::tiny_config();
  Np2mtModel<double> model(c, 29);
  const std::vector<int> x{5, 6, 7}, y{5, 6, 7};
  auto r = gradient_check_params<double>(
      [&](Tape<double>& tape, ParameterStore<double>&) { return sequence_nll(tape, model, x, y); },
      model.params(), 1e-5);
  const double secs = seconds_since(t0);
  return {r.max_relative_error < 1e-4 && r.coordinates == model.params().scalar_count() && secs < 60,
          fmt("d=8, 1-layer blocks, T=T'=3: %zu parameters, max relative error %.3g (< 1e-4), %.1f s (< 60 s)",
              r.coordinates, r.max_relative_error, secs)};
}

Outcome normalization() {
  auto c = test::tiny_config();
  Np2mtModel<double> model(c, 8);
  const std::vector<int> x{5, 6, 7};
  const std::vector<int> symbols{Special::kUnk, 5, 6, 7};
  double total = 0, previous = 0;
  bool monotone = true, bounded = true;
  std::vector<std::vector<int>> frontier{{}};
  std::string masses;
  for (std::size_t len = 1; len <= 6; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : frontier)
      for (int s : symbols) {
        auto t = prefix;
        t.push_back(s);
        Tape<double> tape(TapeOptions{.grad_enabled = false});
        total += std::exp(-sequence_nll(tape, model, x, t).item());
        next.push_back(std::move(t));
      }
    frontier = std::move(next);
    monotone = monotone && total >= previous;
    bounded = bounded && total <= 1.0 + 1e-9;
    masses += fmt("%s%.6f", len == 1 ? "" : " ", total);
    previous = total;
  }
  return {monotone && bounded && total > 0,
          "vocab UNK + 3 words, mass by length bound 1..6: " + masses + " (monotone, <= 1 + 1e-9)"};
}

Outcome complexity_counter() {
  bool ok = true;
  std::string detail;
  for (auto [len, cap] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 2}, {6, 3}, {10, 4}}) {
    auto c = test::tiny_config();
    c.max_tgt_segment = cap;
    Np2mtModel<double> model(c, 1);
    std::vector<int> y(len, 5);
    Tape<double> tape(TapeOptions{.grad_enabled = false});
    model.reset_token_evaluations();
    build_segment_scores(tape, model, std::vector<int>{5, 6}, y);
    std::size_t expected = 0;
    for (std::size_t s = 0; s < len; ++s) expected += std::min(cap, len - s);
    ok = ok && model.decoder_token_evaluations() == expected;
    detail += fmt("%s(T'=%zu, L=%zu): %zu measured / %zu expected", detail.empty() ? "" : "; ", len, cap,
                  model.decoder_token_evaluations(), expected);
  }
  return {ok, detail};
}

// Toy-task setup shared by criteria 5-7.
struct ToyRun {
  ParallelCorpus train, test;
  Vocabulary src, tgt;
  PhraseDictionary dict;
  std::optional<Np2mtModel<float>> model;
  double seconds = 0;
};

ToyRun toy_run(std::size_t threshold, std::size_t max_src_span, std::size_t epochs) {
  toy::PhraseTask task({});
  ToyRun r{task.sample(2000, 11), task.sample(200, 12), {}, {}, {}, {}, 0};
  r.src = Vocabulary::build(r.train.source_side(), threshold);
  r.tgt = Vocabulary::build(r.train.target_side(), threshold);
  apply_unk_mask(r.train, r.src, r.tgt);
  apply_unk_mask(r.test, r.src, r.tgt);
  r.dict = task.dictionary_for_masked(r.src);
  ModelConfig c;
  c.src_vocab = r.src.size();
  c.tgt_vocab = r.tgt.size();
  c.width = 64;
  c.heads = 4;
  c.ff_width = 128;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.max_src_span = max_src_span;
  c.max_tgt_segment = 4;
  c.dropout = 0.1;
  c.max_decode_length = 30;
  r.model.emplace(c, 1);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 16;
  tc.max_lr = 3e-3;
  tc.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  train(*r.model, r.train, nullptr, tc);
  r.seconds = seconds_since(t0);
  return r;
}

ToyRun& learning_run() {
  static std::optional<ToyRun> run;
  if (!run) run = toy_run(1, 4, 8);
  return *run;
}

Outcome beam_exactness() {
  auto c = test::tiny_config();
  auto vocab = test::word_vocab(3);
  Rng rng(5);
  int exact = 0, draws = 20, beam_one = 0, sentences = 0;
  for (int d = 0; d < draws; ++d) {
    Np2mtModel<double> model(c, 1000 + static_cast<std::uint64_t>(d));
    auto source = test::random_ids(rng, 1 + rng.index(4), c.src_vocab);
    auto best = test::exhaustive_best_by_table(model, source, 5);
    ModelDecoder<double> dec(model, source, vocab);
    auto out = beam_search(dec, 100000, 5);
    exact += out.ids == best.ids && std::abs(out.score - best.score) < 1e-9;
    for (int s = 0; s < 5; ++s) {
      auto other = test::random_ids(rng, 1 + rng.index(5), c.src_vocab);
      ModelDecoder<double> od(model, other, vocab);
      beam_one += greedy_decode(od).ids == beam_search(od, 1).ids;
      ++sentences;
    }
  }
  // Beam 1 against greedy on every toy test sentence with the trained model.
  auto& run = learning_run();
  int toy_same = 0;
  for (const auto& p : run.test.pairs) {
    ModelDecoder<float> dec(*run.model, p.source.ids, run.tgt);
    auto g = greedy_decode(dec);
    auto b = beam_search(dec, 1);
    toy_same += g.ids == b.ids && g.trace == b.trace;
  }
  const int toy_total = static_cast<int>(run.test.size());
  return {exact == draws && beam_one == sentences && toy_same == toy_total,
          fmt("saturating beam = exhaustive optimum on %d/%d draws (vocab UNK + 3, horizon 5); "
              "beam 1 = greedy on %d/%d random and %d/%d toy test sentences",
              exact, draws, beam_one, sentences, toy_same, toy_total)};
}

Outcome toy_learning() {
  auto& run = learning_run();
  std::vector<TokenSeq> hyps, refs;
  for (const auto& p : run.test.pairs) {
    hyps.push_back(greedy_decode(ModelDecoder<float>(*run.model, p.source.ids, run.tgt)).words);
    refs.push_back(p.target.raw);
  }
  const double em = toy::exact_match(hyps, refs);
  return {em >= 0.95 && run.seconds < 1800,
          fmt("2000 train / 200 test pairs, d=64: greedy exact match %.1f%% (>= 95%%), training %.0f s (< 1800 s)",
              100 * em, run.seconds)};
}

struct DictStats {
  double masked_types = 0, greedy = 0, dict = 0, lookup = 0, src_oov = 0;
  bool neutral = true;
};

DictStats dictionary_trial(double target_fraction) {
  toy::PhraseTask task({});
  const auto side = task.sample(2000, 11).source_side();
  std::size_t threshold = 1;
  double gap = 1e9;
  for (std::size_t t = 1; t < 400; ++t) {
    const double f = toy::masked_type_fraction(side, Vocabulary::build(side, t));
    if (std::abs(f - target_fraction) < gap) {
      gap = std::abs(f - target_fraction);
      threshold = t;
    }
  }
  auto run = toy_run(threshold, 2, 8);
  DictStats s;
  s.masked_types = toy::masked_type_fraction(side, run.src);
  s.src_oov = oov_rate(run.test.source_side(), run.src);
  std::vector<TokenSeq> g, d, refs;
  std::vector<DecodeTrace> traces;
  PhraseDictionary empty;
  for (const auto& p : run.test.pairs) {
    ModelDecoder<float> dec(*run.model, p.source.ids, run.tgt);
    auto greedy = greedy_decode(dec);
    auto with_dict = dict_greedy_decode(dec, p.source, run.dict);
    s.neutral = s.neutral && dict_greedy_decode(dec, p.source, empty).words == greedy.words;
    g.push_back(greedy.words);
    d.push_back(with_dict.words);
    traces.push_back(with_dict.trace);
    refs.push_back(p.target.raw);
  }
  s.greedy = toy::exact_match(g, refs);
  s.dict = toy::exact_match(d, refs);
  s.lookup = lookup_ratio(traces);
  return s;
}

Outcome dictionary_protocol() {
  const auto high = dictionary_trial(0.30), low = dictionary_trial(0.15);
  const double gain_high = high.dict - high.greedy, gain_low = low.dict - low.greedy;
  const bool ok = high.dict > high.greedy && high.lookup > 0 && high.neutral && low.neutral && gain_high > gain_low;
  return {ok, fmt("~30%% masked types (%.0f%%, test OOV %.1f%%): greedy %.1f%%, dict %.1f%%, lookup ratio %.3f; "
                  "~15%% masked types (%.0f%%, test OOV %.1f%%): greedy %.1f%%, dict %.1f%%; "
                  "gain %.1f > %.1f points; empty dictionary identical: %s",
                  100 * high.masked_types, 100 * high.src_oov, 100 * high.greedy, 100 * high.dict, high.lookup,
                  100 * low.masked_types, 100 * low.src_oov, 100 * low.greedy, 100 * low.dict, 100 * gain_high,
                  100 * gain_low, high.neutral && low.neutral ? "yes" : "no")};
}

Outcome metrics_sanity() {
  auto lines = [](std::initializer_list<const char*> text) {
    std::vector<TokenSeq> out;
    for (const char* l : text) out.push_back(tokenize(l));
    return out;
  };
  const auto refs = lines({"the cat sat on the mat", "a dog barked"});
  const double identity = bleu_score(refs, refs);
  const double clipped = bleu_stats(lines({"the the the the the"}), lines({"the cat sat"})).precision(1);
  const double bp = bleu_stats(lines({"a b"}), lines({"a b c d"})).brevity_penalty();
  const double bp_bleu = bleu_score(lines({"a b c d"}), lines({"a b c d e f g h"}));
  auto close4 = [](double a, double b) { return std::abs(a - b) < 5e-5; };
  const bool bleu_ok = close4(identity, 100.0) && close4(clipped, 0.2) && close4(bp, std::exp(-1.0)) &&
                       close4(bp_bleu, 100.0 * std::exp(-1.0));
  ScheduleConfig s{1000, 0.1, 1e-3};
  const bool lr_ok = lr_at(s, 50) == 5e-4 && lr_at(s, 400) == 1e-3 && lr_at(s, 750) == 5e-4 && lr_at(s, 1000) == 0.0;
  return {bleu_ok && lr_ok,
          fmt("BLEU identity %.4f, clipped unigram %.4f, BP %.4f (e^-1 = %.4f); lr_at(50, 400, 750, 1000) = "
              "%g, %g, %g, %g",
              identity, clipped, bp, std::exp(-1.0), lr_at(s, 50), lr_at(s, 400), lr_at(s, 750), lr_at(s, 1000))};
}

Outcome determinism_and_persistence() {
  toy::PhraseTask task({.rules = 12});
  auto data = task.sample(200, 3);
  auto src = Vocabulary::build(data.source_side(), 2), tgt = Vocabulary::build(data.target_side(), 2);
  apply_unk_mask(data, src, tgt);
  ModelConfig c;
  c.src_vocab = src.size();
  c.tgt_vocab = tgt.size();
  c.width = 16;
  c.heads = 2;
  c.ff_width = 32;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.dropout = 0.2;
  c.max_decode_length = 20;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 10;
  tc.seed = 42;
  Np2mtModel<double> a(c, 42), b(c, 42);
  auto ha = train(a, data, nullptr, tc);
  auto hb = train(b, data, nullptr, tc);
  bool same_train = ha.step_losses == hb.step_losses;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[i].value;
    const auto& y = b.params()[i].value;
    same_train = same_train && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  }
  const auto path = (std::filesystem::temp_directory_path() / "np2mt_acceptance.ckpt").string();
  save_checkpoint(path, a, src, tgt);
  auto ck = load_checkpoint<double>(path);
  std::filesystem::remove(path);
  bool same_params = ck.model.params().size() == a.params().size();
  for (std::size_t i = 0; same_params && i < a.params().size(); ++i) {
    const auto& x = a.params()[i].value;
    const auto& y = ck.model.params()[i].value;
    same_params = x.shape() == y.shape() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  }
  int same_output = 0;
  for (const auto& p : data.pairs) {
    auto before = greedy_decode(ModelDecoder<double>(a, p.source.ids, tgt));
    auto after = greedy_decode(ModelDecoder<double>(ck.model, p.source.ids, ck.target_vocab));
    same_output += before.ids == after.ids && before.trace == after.trace && before.score == after.score;
  }
  return {same_train && same_params && same_output == static_cast<int>(data.size()),
          fmt("two fixed-seed runs bit-identical: %s; checkpoint parameters bit-identical: %s; "
              "greedy outputs identical after reload: %d/%zu",
              same_train ? "yes" : "no", same_params ? "yes" : "no", same_output, data.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"DP correctness", dp_correctness},
      {"End-to-end gradient", end_to_end_gradient},
      {"Normalization", normalization},
      {"Complexity counter", complexity_counter},
      {"Beam exactness", beam_exactness},
      {"Toy learning", toy_learning},
      {"Dictionary protocol", dictionary_protocol},
      {"Metrics sanity", metrics_sanity},
      {"Determinism & persistence", determinism_and_persistence},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    std::printf("%s  criterion %d  %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
