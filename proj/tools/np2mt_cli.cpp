#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "np2mt/np2mt.hpp"

namespace {

using namespace np2mt;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

std::string lines_text(std::span<const TokenSeq> lines) {
  std::string out;
  for (const auto& l : lines) out += join(l) + "\n";
  return out;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct PrepArgs {
  std::string src, tgt, out;
  std::size_t threshold = 1;
  std::size_t max_len = 175;
};

int run_prep(const PrepArgs& a) {
  ParallelCorpus corpus = load_parallel(a.src, a.tgt, {a.max_len, &std::cerr});
  if (corpus.empty()) throw std::runtime_error("no usable sentence pairs");
  const auto src_side = corpus.source_side(), tgt_side = corpus.target_side();
  const Vocabulary srcv = Vocabulary::build(src_side, a.threshold);
  const Vocabulary tgtv = Vocabulary::build(tgt_side, a.threshold);
  srcv.save(a.out + ".src.vocab");
  tgtv.save(a.out + ".tgt.vocab");
  auto masked_text = [](std::span<const TokenSeq> side, const Vocabulary& v) {
    std::string out;
    for (const auto& s : side) out += join(v.decode(v.encode(s))) + "\n";
    return out;
  };
  write_file(a.out + ".src.masked", masked_text(src_side, srcv));
  write_file(a.out + ".tgt.masked", masked_text(tgt_side, tgtv));
  std::cout << "pairs\t" << corpus.size() << "\n"
            << "dropped\t" << corpus.dropped << "\n"
            << "src_vocab\t" << srcv.size() << "\n"
            << "tgt_vocab\t" << tgtv.size() << "\n"
            << "src_oov_rate\t" << fixed(oov_rate(src_side, srcv)) << "\n"
            << "tgt_oov_rate\t" << fixed(oov_rate(tgt_side, tgtv)) << "\n";
  return 0;
}

struct TrainArgs {
  std::string src, tgt, dev_src, dev_tgt, model, src_vocab, tgt_vocab;
  std::size_t threshold = 1;
  std::size_t max_len = 175;
  int precision = 64;
  ModelConfig model_config;
  TrainConfig train_config;
};

template <typename T>
int run_train(TrainArgs a) {
  ParallelCorpus corpus = load_parallel(a.src, a.tgt, {a.max_len, &std::cerr});
  if (corpus.empty()) throw std::runtime_error("no usable training pairs");
  const Vocabulary srcv = a.src_vocab.empty() ? Vocabulary::build(corpus.source_side(), a.threshold)
                                              : Vocabulary::load(a.src_vocab);
  const Vocabulary tgtv = a.tgt_vocab.empty() ? Vocabulary::build(corpus.target_side(), a.threshold)
                                              : Vocabulary::load(a.tgt_vocab);
  apply_unk_mask(corpus, srcv, tgtv);
  std::optional<ParallelCorpus> dev;
  if (!a.dev_src.empty()) {
    dev = load_parallel(a.dev_src, a.dev_tgt, {a.max_len, &std::cerr});
    apply_unk_mask(*dev, srcv, tgtv);
  }
  a.model_config.src_vocab = srcv.size();
  a.model_config.tgt_vocab = tgtv.size();
  Np2mtModel<T> model(a.model_config, a.train_config.seed);
  a.train_config.log = &std::cerr;
  auto history = train(model, corpus, dev ? &*dev : nullptr, a.train_config);
  save_checkpoint(a.model, model, srcv, tgtv);
  std::cout << "epochs\t" << history.epochs.size() << "\n"
            << "steps\t" << (history.epochs.empty() ? 0 : history.epochs.back().steps) << "\n"
            << "best_epoch\t" << history.best_epoch << "\n"
            << "train_loss\t" << fixed(history.epochs.empty() ? 0.0 : history.epochs.back().train_loss)
            << "\n";
  if (dev) std::cout << "dev_loss\t" << fixed(history.best_dev_loss) << "\n";
  return 0;
}

struct TranslateArgs {
  std::string model, src, out, dict, trace, mode = "greedy";
  std::size_t beam = 5;
  std::size_t threads = 0;
  int precision = 64;
};

template <typename T>
int run_translate(const TranslateArgs& a) {
  const auto ck = load_checkpoint<T>(a.model);
  TranslateOptions opts;
  opts.mode = parse_decode_mode(a.mode);
  opts.beam = a.beam;
  opts.threads = a.threads ? a.threads : std::max(1u, std::thread::hardware_concurrency());
  PhraseDictionary dict;
  if (opts.mode == DecodeMode::dict) {
    if (a.dict.empty()) throw std::runtime_error("--mode dict requires --dict");
    dict = PhraseDictionary::load(a.dict);
    opts.dictionary = &dict;
  } else if (!a.dict.empty()) {
    std::cerr << "warning: --dict is ignored outside --mode dict\n";
  }
  std::vector<Sentence> sources;
  std::vector<std::size_t> index;  // non-empty input lines
  const auto lines = read_lines(a.src);
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!lines[i].empty()) {
      sources.push_back(masked(lines[i], ck.source_vocab));
      index.push_back(i);
    }
  const auto results = translate_all(ck.model, sources, ck.target_vocab, opts);
  std::vector<TokenSeq> hyps(lines.size());
  std::vector<TraceRecord> traces(lines.size());
  for (std::size_t n = 0; n < results.size(); ++n) {
    hyps[index[n]] = results[n].words;
    traces[index[n]] = {results[n].trace, results[n].truncated};
  }
  emit(a.out, lines_text(hyps));
  if (!a.trace.empty()) write_file(a.trace, format_trace_file(traces));
  return 0;
}

struct EvalArgs {
  std::string hyp, ref, src, model, trace, out;
  bool smooth = false;
  bool kv = false;
};

int run_eval(const EvalArgs& a) {
  const auto hyps = read_lines(a.hyp), refs = read_lines(a.ref);
  EvalReport report;
  report.bleu = bleu_score(hyps, refs, a.smooth);
  report.sentences = hyps.size();
  if (!a.model.empty()) {
    const auto ck = load_checkpoint<double>(a.model);
    if (!a.src.empty()) report.src_oov_rate = oov_rate(read_lines(a.src), ck.source_vocab);
    report.tgt_oov_rate = oov_rate(refs, ck.target_vocab);
  } else if (!a.src.empty()) {
    std::cerr << "warning: --src needs --model for the OOV rate\n";
  }
  if (!a.trace.empty()) {
    const auto records = parse_trace_file(read_file(a.trace));
    if (records.size() != hyps.size())
      throw std::runtime_error("trace file has " + std::to_string(records.size()) +
                               " sentences, hypotheses have " + std::to_string(hyps.size()));
    std::vector<DecodeTrace> traces;
    std::size_t truncated = 0;
    for (const auto& r : records) {
      traces.push_back(r.trace);
      truncated += r.truncated;
    }
    report.lookup_ratio = lookup_ratio(traces);
    report.truncated = truncated;
  }
  emit(a.out, report.to_text(a.kv ? '=' : '\t'));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural phrase-to-phrase translation: data prep, training, decoding, evaluation"};
  app.require_subcommand(1, 1);

  PrepArgs prep;
  auto* prep_cmd = app.add_subcommand("prep", "Build vocabularies and write UNK-masked corpora");
  prep_cmd->add_option("--src", prep.src, "Source training text")->required()->check(CLI::ExistingFile);
  prep_cmd->add_option("--tgt", prep.tgt, "Target training text")->required()->check(CLI::ExistingFile);
  prep_cmd->add_option("--vocab-threshold", prep.threshold, "Minimum count to keep a word")
      ->capture_default_str()->check(CLI::PositiveNumber);
  prep_cmd->add_option("--max-len", prep.max_len, "Drop pairs with a longer side")->capture_default_str();
  prep_cmd->add_option("--out", prep.out, "Output prefix")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and save the best checkpoint");
  train_cmd->add_option("--src", tr.src, "Source training text")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--tgt", tr.tgt, "Target training text")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev-src", tr.dev_src, "Source dev text")->check(CLI::ExistingFile);
  auto* dev_tgt = train_cmd->add_option("--dev-tgt", tr.dev_tgt, "Target dev text")->check(CLI::ExistingFile);
  train_cmd->get_option("--dev-src")->needs(dev_tgt);
  dev_tgt->needs(train_cmd->get_option("--dev-src"));
  train_cmd->add_option("--src-vocab", tr.src_vocab, "Source vocabulary from prep")->check(CLI::ExistingFile);
  train_cmd->add_option("--tgt-vocab", tr.tgt_vocab, "Target vocabulary from prep")->check(CLI::ExistingFile);
  train_cmd->add_option("--vocab-threshold", tr.threshold, "Minimum count to keep a word")
      ->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-len", tr.max_len, "Drop pairs with a longer side")->capture_default_str();
  train_cmd->add_option("--model", tr.model, "Checkpoint to write")->required();
  train_cmd->add_option("--precision", tr.precision, "Floating-point width")
      ->capture_default_str()->check(CLI::IsMember({32, 64}));
  auto& mc = tr.model_config;
  auto& tc = tr.train_config;
  train_cmd->add_option("--seed", tc.seed, "Initialization and shuffling seed")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch", tc.batch_size, "Sentences per batch")->capture_default_str();
  train_cmd->add_option("--lr", tc.max_lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--clip", tc.clip_norm, "Gradient norm clip")->capture_default_str();
  train_cmd->add_option("--width", mc.width, "Model width")->capture_default_str();
  train_cmd->add_option("--encoder-layers", mc.encoder_layers, "Recurrent encoder layers")->capture_default_str();
  train_cmd->add_option("--decoder-layers", mc.decoder_layers, "Segment decoder layers")->capture_default_str();
  train_cmd->add_option("--heads", mc.heads, "Attention heads")->capture_default_str();
  train_cmd->add_option("--ff-width", mc.ff_width, "Feed-forward width")->capture_default_str();
  train_cmd->add_option("--dropout", mc.dropout, "Dropout rate")->capture_default_str();
  train_cmd->add_option("--max-src-span", mc.max_src_span, "Longest source phrase")->capture_default_str();
  train_cmd->add_option("--max-tgt-segment", mc.max_tgt_segment, "Longest target segment")->capture_default_str();
  train_cmd->add_option("--max-decode-length", mc.max_decode_length, "Decoding length cap")->capture_default_str();

  TranslateArgs tl;
  auto* translate_cmd = app.add_subcommand("translate", "Decode a source file");
  translate_cmd->add_option("--model", tl.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  translate_cmd->add_option("--src", tl.src, "Source text, one sentence per line")
      ->required()->check(CLI::ExistingFile);
  translate_cmd->add_option("--out", tl.out, "Hypothesis file (default stdout)");
  translate_cmd->add_option("--mode", tl.mode, "Decoder")
      ->capture_default_str()->check(CLI::IsMember({"greedy", "beam", "dict"}));
  translate_cmd->add_option("--beam", tl.beam, "Beam size")->capture_default_str()->check(CLI::PositiveNumber);
  translate_cmd->add_option("--dict", tl.dict, "Phrase dictionary (TSV)")->check(CLI::ExistingFile);
  translate_cmd->add_option("--trace", tl.trace, "Write per-segment traces here");
  translate_cmd->add_option("--precision", tl.precision, "Floating-point width")
      ->capture_default_str()->check(CLI::IsMember({32, 64}));
  translate_cmd->add_option("--threads", tl.threads, "Worker threads (0: all cores)")->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score hypotheses against references");
  eval_cmd->add_option("--hyp", ev.hyp, "Hypotheses")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref", ev.ref, "References")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--src", ev.src, "Source text, for the source OOV rate")->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", ev.model, "Checkpoint whose vocabularies define OOV")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--trace", ev.trace, "Trace file from translate")->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "Report file (default stdout)");
  eval_cmd->add_flag("--smooth", ev.smooth, "Add-one smoothing for orders 2-4");
  eval_cmd->add_flag("--kv", ev.kv, "Write key=value instead of key<TAB>value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (*prep_cmd) return run_prep(prep);
    if (*train_cmd) return tr.precision == 32 ? run_train<float>(tr) : run_train<double>(tr);
    if (*translate_cmd) return tl.precision == 32 ? run_translate<float>(tl) : run_translate<double>(tl);
    if (*eval_cmd) return run_eval(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
