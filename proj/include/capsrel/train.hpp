#pragma once

// Training loop and evaluation drivers. Training walks seeded batches
// sequentially (bit-reproducible for a given seed/config/corpus); evaluation
// fans sentences out across threads into preassigned slots, so thread count
// never changes results. CAPSREL_THREADS caps evaluation parallelism.

#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "capsrel/data.hpp"
#include "capsrel/errors.hpp"
#include "capsrel/graph.hpp"
#include "capsrel/metrics.hpp"
#include "capsrel/model.hpp"
#include "capsrel/optim.hpp"

namespace capsrel {

struct TrainConfig {
  double lr = 0.001;
  int batch = 50;
  int epochs = 30;
  double dropout = 0.0;
  double l2 = 0.0;
  std::uint64_t seed = 1;
  double dev_fraction = 0.1;  // carved from the training corpus when no dev set exists
  int patience = 10;          // epochs without dev-F1 improvement before stopping

  void validate() const {
    if (lr < 0 || dropout < 0 || dropout >= 1 || l2 < 0)
      throw ConfigError("rates must satisfy lr>=0, 0<=dropout<1, l2>=0");
    if (batch < 1 || epochs < 0) throw ConfigError("batch >= 1 and epochs >= 0 required");
    if (dev_fraction < 0 || dev_fraction >= 1) throw ConfigError("dev_fraction must lie in [0,1)");
    if (patience < 1) throw ConfigError("patience must be >= 1");
  }
};

struct TrainResult {
  std::vector<double> loss_trace;    // mean training loss per epoch
  std::vector<double> dev_f1_trace;  // dev macro-F1 per epoch
  double best_dev_f1 = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
};

// Return true to stop training (target reached).
using EpochCallback = std::function<bool(int epoch, double mean_loss, double dev_f1)>;

inline int eval_thread_count(std::size_t n_items) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("CAPSREL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) hw = static_cast<unsigned>(v);
  }
  if (hw > n_items) hw = static_cast<unsigned>(n_items == 0 ? 1 : n_items);
  return static_cast<int>(hw);
}

// fn(i) writes only to slot i of caller-owned storage.
inline void parallel_over(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int threads = eval_thread_count(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

template <class T>
std::vector<PredictionResult> predict_all(ModelParams<T>& model,
                                          const std::vector<SentenceExample>& corpus) {
  std::vector<PredictionResult> out(corpus.size());
  parallel_over(corpus.size(), [&](std::size_t i) { out[i] = score_sentence(model, corpus[i]).pred; });
  return out;
}

template <class T>
EvalReport evaluate_model(ModelParams<T>& model, const std::vector<SentenceExample>& corpus) {
  if (corpus.empty()) throw ContractError("evaluate_model on an empty corpus");
  auto pred = predict_all(model, corpus);
  std::vector<std::vector<int>> gold(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) gold[i] = corpus[i].labels;
  return evaluate_sets(gold, pred, model.relation_count());
}

// Best decode threshold for a baseline head's class probabilities.
template <class T>
SweepResult sweep_model(ModelParams<T>& model, const std::vector<SentenceExample>& corpus) {
  if (corpus.empty()) throw ContractError("sweep_model on an empty corpus");
  if (model.head == HeadKind::kCapsule)
    throw ContractError("threshold sweep applies to baseline heads; capsule models decode against B");
  auto pred = predict_all(model, corpus);
  std::vector<std::vector<int>> gold(corpus.size());
  std::vector<std::vector<double>> probs(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    gold[i] = corpus[i].labels;
    probs[i] = pred[i].scores;
  }
  return threshold_sweep(gold, probs, model.relation_count());
}

namespace detail {

inline std::uint64_t dropout_seed(std::uint64_t seed, int epoch, long long counter) {
  std::uint64_t x = splitmix64(seed ^ 0xa5a5a5a55a5a5a5aull);
  x = splitmix64(x ^ static_cast<std::uint64_t>(epoch));
  return splitmix64(x ^ static_cast<std::uint64_t>(counter));
}

template <class T>
std::vector<Mat<T>> snapshot_params(ModelParams<T>& m) {
  std::vector<Mat<T>> s;
  for (auto& e : m.entries()) s.push_back(*e.mat);
  return s;
}

template <class T>
void restore_params(ModelParams<T>& m, const std::vector<Mat<T>>& s) {
  auto es = m.entries();
  for (std::size_t i = 0; i < es.size(); ++i) *es[i].mat = s[i];
}

}  // namespace detail

// Trains in place; on return the model holds the best-dev-F1 parameters seen
// (final parameters when no dev split was requested). With an external dev
// set the full corpus is trained on; otherwise dev_fraction of a seeded
// shuffle is carved off, disjoint from the updated training part.
template <class T>
TrainResult train_model(ModelParams<T>& model, const std::vector<SentenceExample>& corpus,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr,
                        const std::vector<SentenceExample>* dev_set = nullptr) {
  cfg.validate();
  if (corpus.empty()) throw ContractError("train_model on an empty corpus");

  std::vector<int> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng split_rng(splitmix64(cfg.seed ^ 0xdead10ccfeedfaceull));
  split_rng.shuffle(order);
  const bool external_dev = dev_set && !dev_set->empty();
  const int n_dev = external_dev ? 0 : static_cast<int>(corpus.size() * cfg.dev_fraction);
  std::vector<SentenceExample> dev;
  if (external_dev) dev = *dev_set;
  std::vector<int> train_idx;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (static_cast<int>(k) < n_dev)
      dev.push_back(corpus[order[k]]);
    else
      train_idx.push_back(order[k]);
  }
  if (train_idx.empty()) throw ContractError("dev split consumed the whole corpus");

  const bool clamp_b = model.head == HeadKind::kCapsule && model.loss == LossKind::kSliding;
  auto entries = model.entries();
  const std::size_t P = entries.size();
  AdamState<T> adam(model, cfg.lr, cfg.l2);

  TrainResult res;
  std::vector<Mat<T>> best;
  int since_best = 0;
  long long drop_counter = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = batch_iter(static_cast<int>(train_idx.size()), cfg.batch, cfg.seed, epoch);
    double epoch_loss = 0.0;
    long long seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Mat<T>> grads(P);
      double batch_loss = 0.0;
      for (int local : batches[b]) {
        const SentenceExample& ex = corpus[train_idx[local]];
        Tape<T> tape;
        Bindings<T> bind(tape, model);
        Rng drop_rng(detail::dropout_seed(cfg.seed, epoch, drop_counter++));
        auto loss = sentence_loss(tape, bind, model, ex, cfg.dropout, &drop_rng);
        const double lv = static_cast<double>(tape.scalar_val(loss));
        if (!std::isfinite(lv))
          throw TrainAbort("non-finite loss " + std::to_string(lv) + " at epoch " +
                           std::to_string(epoch) + " batch " + std::to_string(b));
        batch_loss += lv;
        tape.backward(loss);
        tape.export_grads(grads);
      }
      const T inv_m = static_cast<T>(1.0 / batches[b].size());
      for (auto& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv_m;
      adam_step(model, adam, grads);
      if (clamp_b)
        model.boundary[0] = static_cast<T>(
            clamp_boundary(static_cast<double>(model.boundary[0]), model.margin.gamma));
      epoch_loss += batch_loss;
      seen += static_cast<long long>(batches[b].size());
    }
    if (!model.all_finite())
      throw TrainAbort("non-finite parameters after epoch " + std::to_string(epoch));

    const double mean_loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
    double dev_f1 = 0.0;
    if (!dev.empty()) {
      dev_f1 = evaluate_model(model, dev).f1;
    } else {
      std::vector<SentenceExample> tr;
      tr.reserve(train_idx.size());
      for (int i : train_idx) tr.push_back(corpus[i]);
      dev_f1 = evaluate_model(model, tr).f1;
    }
    res.loss_trace.push_back(mean_loss);
    res.dev_f1_trace.push_back(dev_f1);
    res.epochs_run = epoch + 1;

    if (res.best_epoch < 0 || dev_f1 > res.best_dev_f1) {
      res.best_dev_f1 = dev_f1;
      res.best_epoch = epoch;
      best = detail::snapshot_params(model);
      since_best = 0;
    } else {
      since_best += 1;
    }

    if (on_epoch && on_epoch(epoch, mean_loss, dev_f1)) break;
    if (since_best >= cfg.patience) break;
  }

  if (!best.empty()) detail::restore_params(model, best);
  return res;
}

}  // namespace capsrel
