#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <type_traits>
#include <vector>

#include "np2mt/data/corpus.hpp"
#include "np2mt/dp/segmental_dp.hpp"
#include "np2mt/model/model.hpp"
#include "np2mt/numerics/random.hpp"
#include "np2mt/train/adam.hpp"
#include "np2mt/train/schedule.hpp"

namespace np2mt {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t max_steps = 0;  // 0: epochs * batches per epoch
  double max_lr = 1e-3;
  double warmup_fraction = 0.1;
  double clip_norm = 5.0;
  AdamConfig adam;
  std::uint64_t seed = 1;
  bool restore_best = true;  // reload the best-dev parameters at the end
  std::ostream* log = nullptr;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // optimizer steps taken so far
  double train_loss = 0;  // nats per target token, training mode
  double dev_loss = std::numeric_limits<double>::quiet_NaN();  // eval mode
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;  // per-token loss of each batch
  std::size_t best_epoch = 0;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  std::size_t skipped_steps = 0;
};

/// Per-token negative log-likelihood of a corpus in eval mode.
template <typename T>
double corpus_loss(const Np2mtModel<T>& model, const ParallelCorpus& corpus) {
  double nll = 0;
  std::size_t tokens = 0;
  for (const auto& p : corpus.pairs) {
    Tape<T> tape(TapeOptions{.grad_enabled = false});
    nll += static_cast<double>(sequence_nll(tape, model, p.source.ids, p.target.ids).item());
    tokens += p.target.ids.size();
  }
  if (tokens == 0) throw std::invalid_argument("corpus_loss of an empty corpus");
  return nll / static_cast<double>(tokens);
}

/// Shuffles, groups sentences of similar length into batches, and shuffles
/// the batch order. Sentences are scored one at a time, so batches need no
/// padding; grouping only keeps per-batch token counts even.
inline std::vector<std::vector<std::size_t>> make_batches(const ParallelCorpus& corpus,
                                                          std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  auto len = [&](std::size_t i) {
    return corpus.pairs[i].source.ids.size() + corpus.pairs[i].target.ids.size();
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return len(a) < len(b); });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  rng.shuffle(batches);
  return batches;
}

/// Accumulates gradients of the batch's per-token loss into the store and
/// returns that loss.
template <typename T>
double accumulate_batch(const Np2mtModel<T>& model, const ParallelCorpus& corpus,
                        std::span<const std::size_t> batch, Rng& rng) {
  std::size_t tokens = 0;
  for (std::size_t i : batch) tokens += corpus.pairs[i].target.ids.size();
  const T inv = T(1) / static_cast<T>(tokens);
  double loss = 0;
  for (std::size_t i : batch) {
    const auto& p = corpus.pairs[i];
    Tape<T> tape;
    RunMode mode{true, &rng};
    Var<T> nll = sequence_nll(tape, model, p.source.ids, p.target.ids, mode);
    loss += static_cast<double>(nll.item());
    tape.backward(scale(nll, inv));
  }
  return loss / static_cast<double>(tokens);
}

/// Minimizes the per-token sequence NLL with Adam, global-norm clipping and
/// the three-stage learning-rate schedule. `on_best` runs whenever the dev
/// loss improves (or after every epoch when there is no dev set).
template <typename T>
TrainHistory train(Np2mtModel<T>& model, const ParallelCorpus& corpus, const ParallelCorpus* dev,
                   const TrainConfig& config,
                   const std::type_identity_t<std::function<void(const Np2mtModel<T>&, const EpochRecord&)>>& on_best = {}) {
  if (corpus.empty()) throw std::invalid_argument("empty training corpus");
  for (const auto& p : corpus.pairs)
    if (p.source.ids.size() != p.source.raw.size() || p.target.ids.size() != p.target.raw.size() ||
        p.target.ids.empty())
      throw std::invalid_argument("training corpus must be masked and non-empty");
  Rng rng(config.seed);
  const std::size_t per_epoch = (corpus.size() + config.batch_size - 1) / config.batch_size;
  ScheduleConfig schedule{config.max_steps ? config.max_steps : config.epochs * per_epoch,
                          config.warmup_fraction, config.max_lr};
  schedule.validate();
  auto& store = model.params();
  OptimizerState<T> state(store, config.adam);
  TrainHistory history;
  std::vector<Tensor<T>> best;
  std::size_t step = 0;
  for (std::size_t epoch = 1; step < schedule.total_steps; ++epoch) {
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (const auto& batch : make_batches(corpus, config.batch_size, rng)) {
      if (step >= schedule.total_steps) break;
      store.zero_grad();
      const double loss = accumulate_batch(model, corpus, batch, rng);
      clip_grad_norm(store, static_cast<T>(config.clip_norm));
      ++step;
      if (!adam_step(state, store, lr_at(schedule, step), false, config.log)) ++history.skipped_steps;
      history.step_losses.push_back(loss);
      epoch_loss += loss;
      ++batches;
    }
    EpochRecord rec{epoch, step, epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches))};
    if (dev && !dev->empty()) rec.dev_loss = corpus_loss(model, *dev);
    history.epochs.push_back(rec);
    if (config.log)
      *config.log << "epoch " << epoch << "\tsteps " << step << "\ttrain " << rec.train_loss
                  << "\tdev " << rec.dev_loss << '\n';
    const bool improved = std::isnan(rec.dev_loss) || rec.dev_loss < history.best_dev_loss;
    if (improved) {
      history.best_epoch = epoch;
      if (!std::isnan(rec.dev_loss)) history.best_dev_loss = rec.dev_loss;
      best.clear();
      for (const auto& p : store) best.push_back(p.value);
      if (on_best) on_best(model, rec);
    }
  }
  if (config.restore_best && !best.empty())
    for (std::size_t i = 0; i < store.size(); ++i) store[i].value = best[i];
  return history;
}

}  // namespace np2mt
