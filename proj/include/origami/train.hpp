#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "origami/model.hpp"
#include "origami/optim.hpp"
#include "origami/schema.hpp"
#include "origami/tokenizer.hpp"

namespace origami {

// Parallelism comes from splitting batches across worker threads, so Eigen's
// own GEMM threading stays off.
inline void set_compute_threads(int) { Eigen::setNbThreads(1); }

struct TrainSettings {
  int epochs = 50;
  int batch_size = 128;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  bool shuffle_keys = true;  // key-order augmentation
  int workers = 2;
  std::string loss_csv;      // per-epoch log, empty to disable
  double lr_floor_ratio = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
  std::size_t max_stream_len = 0;
};

namespace detail {

// Encodes a slice of records in parallel, deterministically per index.
inline void encode_indices(const std::vector<Json>& corpus,
                           const std::vector<std::size_t>& indices,
                           const VocabSpec& vocab, const NumericScalers& scalers,
                           const TokenizerOptions& opts, bool shuffle,
                           std::uint64_t seed, std::uint64_t epoch, int workers,
                           std::vector<TokenStream>& out) {
  out.resize(indices.size());
  auto work = [&](std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i) {
      const Json& rec = corpus[indices[i]];
      if (shuffle) {
        Rng rng = make_rng({seed, 0x73687566ULL, epoch, indices[i]});
        out[i] = encode(shuffle_keys(rec, rng), vocab, scalers, opts);
      } else {
        out[i] = encode(rec, vocab, scalers, opts);
      }
    }
  };
  if (workers <= 1 || indices.size() < 16) {
    work(0, indices.size());
    return;
  }
  std::vector<std::thread> pool;
  std::size_t per = (indices.size() + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::size_t from = std::min(indices.size(), w * per);
    std::size_t to = std::min(indices.size(), (w + 1) * per);
    if (from < to) pool.emplace_back(work, from, to);
  }
  for (auto& t : pool) t.join();
}

// Per-worker scratch for one optimizer step.
template <class S>
struct WorkerSlots {
  std::vector<ModelParamsT<S>> grads;   // one buffer per worker

  void ensure(int workers, ModelParamsT<S>& params) {
    while (static_cast<int>(grads.size()) < workers) {
      grads.push_back(params.zeros_like());
    }
  }
};

namespace detail {

// Splits the streams into `workers` contiguous chunks and evaluates the loss
// (and optionally gradients) under the full-batch normalizer; chunk results
// sum exactly to the single-batch computation.
template <class S>
LossBreakdown chunked_loss(const std::vector<TokenStream>& streams,
                           const ModelConfig& cfg, const VocabSpec& vocab,
                           const SchemaMaskTable* table, ModelParamsT<S>& params,
                           WorkerSlots<S>* slots, int workers,
                           std::uint64_t dropout_seed, bool use_dropout) {
  LossNormalizer norm;
  for (const TokenStream& s : streams) {
    if (s.length() < 2) continue;
    norm.n_targets += static_cast<std::int64_t>(s.length()) - 1;
    for (std::size_t t = 1; t < s.length(); ++t) {
      if (s.tokens[t] == kNum) ++norm.n_num_targets;
    }
  }
  if (norm.n_targets == 0) return LossBreakdown{};

  workers = std::max(1, std::min<int>(workers, static_cast<int>(streams.size())));
  if (slots) slots->ensure(workers, params);

  std::vector<LossBreakdown> parts(workers);
  std::vector<std::exception_ptr> errors(workers);
  auto run_chunk = [&](int w) {
    try {
      std::size_t per = (streams.size() + workers - 1) / workers;
      std::size_t from = std::min(streams.size(), w * per);
      std::size_t to = std::min(streams.size(), (w + 1) * per);
      if (from >= to) return;
      std::vector<const TokenStream*> ptrs;
      for (std::size_t i = from; i < to; ++i) ptrs.push_back(&streams[i]);
      PreparedBatch pb = prepare_batch(ptrs, cfg, vocab, table);
      Rng dropout_rng = make_rng({dropout_seed, 0x64726fULL,
                                  static_cast<std::uint64_t>(w)});
      parts[w] = total_loss_and_grad<S>(
          pb, cfg, params, slots ? &slots->grads[w] : nullptr,
          use_dropout && cfg.dropout > 0.0 ? &dropout_rng : nullptr, &norm);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run_chunk(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_chunk, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  LossBreakdown out;
  out.n_targets = norm.n_targets;
  out.n_num_targets = norm.n_num_targets;
  out.lambda = static_cast<double>(norm.n_num_targets) /
               static_cast<double>(norm.n_targets);
  double ce_sum = 0, nll_sum = 0;
  for (const LossBreakdown& c : parts) {
    ce_sum += c.ce;      // raw sums under the normalizer
    nll_sum += c.nll;
    out.total += c.total;
  }
  out.ce = ce_sum / static_cast<double>(norm.n_targets);
  out.nll = norm.n_num_targets > 0
                ? nll_sum / static_cast<double>(norm.n_num_targets)
                : 0.0;
  return out;
}

}  // namespace detail

// Evaluation-mode loss over a corpus (no augmentation, no dropout).
inline double corpus_loss(const std::vector<Json>& corpus,
                          const VocabSpec& vocab, const NumericScalers& scalers,
                          const SchemaMaskTable& table, const ModelConfig& cfg,
                          const TokenizerOptions& opts, ModelParams& params,
                          int batch_size, int workers) {
  if (corpus.empty()) return 0.0;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  double weighted = 0.0;
  std::int64_t targets = 0;
  for (std::size_t at = 0; at < order.size();
       at += static_cast<std::size_t>(batch_size)) {
    std::size_t hi = std::min(order.size(), at + batch_size);
    std::vector<std::size_t> slice(order.begin() + at, order.begin() + hi);
    std::vector<TokenStream> streams;
    detail::encode_indices(corpus, slice, vocab, scalers, opts, false, 0, 0,
                           workers, streams);
    LossBreakdown loss = detail::chunked_loss<float>(
        streams, cfg, vocab, &table, params, nullptr, workers, 0, false);
    weighted += loss.total * static_cast<double>(loss.n_targets);
    targets += loss.n_targets;
  }
  return targets > 0 ? weighted / static_cast<double>(targets) : 0.0;
}

// Full training run: key shuffling (optional), grammar and schema masks in
// the loss, Adam with cosine decay, per-epoch train/valid logging.
inline TrainResult train_model(const std::vector<Json>& train_corpus,
                               const std::vector<Json>& valid_corpus,
                               const VocabSpec& vocab,
                               const NumericScalers& scalers,
                               const SchemaMaskTable& table,
                               const ModelConfig& cfg,
                               const TokenizerOptions& opts,
                               const TrainSettings& settings) {
  if (train_corpus.empty()) throw Error("train: empty corpus");
  cfg.check();
  set_compute_threads(settings.workers);

  TrainResult result;
  result.params = init_params<float>(cfg, settings.seed);
  auto grads = result.params.zeros_like();
  Adam<float> adam(result.params, OptimSettings{});

  for (const Json& rec : train_corpus) {
    result.max_stream_len = std::max(
        result.max_stream_len, encode(rec, vocab, scalers, opts).length());
  }

  const std::int64_t batches_per_epoch =
      (static_cast<std::int64_t>(train_corpus.size()) + settings.batch_size - 1) /
      settings.batch_size;
  const std::int64_t total_steps =
      batches_per_epoch * static_cast<std::int64_t>(settings.epochs);

  std::ofstream csv;
  if (!settings.loss_csv.empty()) {
    csv.open(settings.loss_csv);
    if (!csv) throw IoError("cannot open " + settings.loss_csv);
    csv << "epoch,train_loss,valid_loss,lr\n";
  }

  std::int64_t step = 0;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    // deterministic epoch permutation
    std::vector<std::size_t> order(train_corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng perm_rng = make_rng({settings.seed, 0x6f72ULL,
                             static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(perm_rng, i)]);
    }

    double weighted = 0.0;
    std::int64_t targets = 0;
    double lr = settings.lr;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(settings.batch_size)) {
      std::size_t hi = std::min(order.size(), at + settings.batch_size);
      std::vector<std::size_t> slice(order.begin() + at, order.begin() + hi);
      std::vector<TokenStream> streams;
      detail::encode_indices(train_corpus, slice, vocab, scalers, opts,
                             settings.shuffle_keys, settings.seed,
                             static_cast<std::uint64_t>(epoch),
                             settings.workers, streams);
      std::vector<const TokenStream*> ptrs;
      for (auto& s : streams) ptrs.push_back(&s);
      PreparedBatch pb = prepare_batch(ptrs, cfg, vocab, &table);

      grads.set_zero();
      Rng dropout_rng = make_rng({settings.seed, 0x64726fULL,
                                  static_cast<std::uint64_t>(step)});
      LossBreakdown loss = total_loss_and_grad<float>(
          pb, cfg, result.params, &grads,
          cfg.dropout > 0.0 ? &dropout_rng : nullptr);
      if (!std::isfinite(loss.total)) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                    ", step " + std::to_string(step) +
                    " (ce=" + std::to_string(loss.ce) +
                    ", nll=" + std::to_string(loss.nll) + ")");
      }
      lr = cosine_lr(settings.lr, step, total_steps, settings.lr_floor_ratio);
      adam.step(result.params, grads, lr);
      weighted += loss.total * static_cast<double>(loss.n_targets);
      targets += loss.n_targets;
      ++step;
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = targets > 0 ? weighted / static_cast<double>(targets) : 0.0;
    es.valid_loss =
        valid_corpus.empty()
            ? 0.0
            : corpus_loss(valid_corpus, vocab, scalers, table, cfg, opts,
                          result.params, settings.batch_size, settings.workers);
    es.lr = lr;
    result.history.push_back(es);
    if (csv.is_open()) {
      csv << es.epoch << ',' << es.train_loss << ',' << es.valid_loss << ','
          << es.lr << '\n';
      csv.flush();
    }
  }
  return result;
}

}  // namespace origami
