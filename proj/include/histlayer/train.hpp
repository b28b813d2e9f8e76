#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "histlayer/model.hpp"
#include "histlayer/optim.hpp"
#include "histlayer/rng.hpp"

namespace histlayer {

// One dataset split: images (N, C, H, W) with pixel values already in [0, 1],
// plus one class index per sample.
struct SplitData {
  Tensor images;
  std::vector<int> labels;

  int count() const { return images.n(); }
};

struct TrainConfig {
  int max_epochs = 300;
  int patience = 10;  // consecutive epochs without a validation-loss improvement
  int batch_size = 64;
  double lr = 1e-3;
  enum class Opt { kAdam, kSgdMomentum };
  Opt optimizer = Opt::kAdam;
  double momentum = 0.9;  // SGD only
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  void validate() const {
    if (max_epochs < 1 || batch_size < 1) {
      throw std::invalid_argument("TrainConfig: max_epochs and batch_size must be >= 1");
    }
    if (patience < 1 || patience >= max_epochs) {
      throw std::invalid_argument("TrainConfig: need 1 <= patience < max_epochs");
    }
    if (seeds.empty()) {
      throw std::invalid_argument("TrainConfig: seed list must be non-empty");
    }
  }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;  // percent
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

inline Tensor gather_batch(const SplitData& d, const std::vector<int>& order, int first, int count) {
  Tensor batch(count, d.images.c(), d.images.h(), d.images.w());
  const std::size_t stride =
      static_cast<std::size_t>(d.images.c()) * d.images.h() * d.images.w();
  for (int i = 0; i < count; ++i) {
    const double* src = d.images.data() + order[first + i] * stride;
    std::copy(src, src + stride, batch.data() + i * stride);
  }
  return batch;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy_pct = 0.0;
  std::vector<int> predictions;
};

inline std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.n());
  for (int n = 0; n < logits.n(); ++n) {
    int best = 0;
    for (int k = 1; k < logits.c(); ++k) {
      if (logits.at(n, k, 0, 0) > logits.at(n, best, 0, 0)) best = k;
    }
    out[n] = best;
  }
  return out;
}

inline EvalResult evaluate(const Model& m, const SplitData& d, int batch_size = 64) {
  if (d.count() == 0) throw std::invalid_argument("evaluate: empty split");
  std::vector<int> order(d.count());
  std::iota(order.begin(), order.end(), 0);
  EvalResult res;
  res.predictions.reserve(d.count());
  double total_loss = 0.0;
  int correct = 0;
  for (int first = 0; first < d.count(); first += batch_size) {
    const int count = std::min(batch_size, d.count() - first);
    Tensor batch = gather_batch(d, order, first, count);
    std::vector<int> labels(d.labels.begin() + first, d.labels.begin() + first + count);
    Tensor logits = forward(m, batch);
    total_loss += softmax_cross_entropy(logits, labels).loss * count;
    std::vector<int> preds = argmax_rows(logits);
    for (int i = 0; i < count; ++i) {
      if (preds[i] == labels[i]) ++correct;
      res.predictions.push_back(preds[i]);
    }
  }
  res.loss = total_loss / d.count();
  res.accuracy_pct = 100.0 * correct / d.count();
  return res;
}

// Mini-batch training with per-epoch reshuffling, early stopping on the
// validation loss, and restoration of the best-validation-epoch weights.
// Fully deterministic given (model init, data, config, run_seed).
inline TrainResult train(Model& m, const SplitData& train_set, const SplitData& val_set,
                         const TrainConfig& cfg, std::uint64_t run_seed) {
  cfg.validate();
  if (train_set.count() == 0 || val_set.count() == 0) {
    throw std::invalid_argument("train: empty train or validation split");
  }
  if (train_set.count() != static_cast<int>(train_set.labels.size()) ||
      val_set.count() != static_cast<int>(val_set.labels.size())) {
    throw std::invalid_argument("train: image/label count mismatch");
  }

  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  SgdMomentum sgd(SgdMomentumConfig{cfg.lr, cfg.momentum});
  SplitMix64 shuffle_rng(hash64(run_seed, 4));

  TrainResult result;
  Model best = m;
  int epochs_without_improvement = 0;
  std::vector<int> order(train_set.count());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (int i = train_set.count() - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    int correct = 0;
    for (int first = 0; first < train_set.count(); first += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, train_set.count() - first);
      Tensor batch = gather_batch(train_set, order, first, count);
      std::vector<int> labels(count);
      for (int i = 0; i < count; ++i) labels[i] = train_set.labels[order[first + i]];

      ForwardCache cache;
      Tensor logits = forward(m, batch, &cache);
      LossAndGrad lg = softmax_cross_entropy(logits, labels);
      epoch_loss += lg.loss * count;
      std::vector<int> preds = argmax_rows(logits);
      for (int i = 0; i < count; ++i) {
        if (preds[i] == labels[i]) ++correct;
      }
      Gradients grads = backward(m, cache, lg.grad_logits);
      auto pv = param_views(m);
      auto gv = grad_views(grads, m);
      if (cfg.optimizer == TrainConfig::Opt::kAdam) {
        adam.step(pv, gv);
      } else {
        sgd.step(pv, gv);
      }
    }

    EvalResult val = evaluate(m, val_set, cfg.batch_size);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / train_set.count();
    stats.train_acc = 100.0 * correct / train_set.count();
    stats.val_loss = val.loss;
    stats.val_acc = val.accuracy_pct;
    result.history.push_back(stats);

    if (val.loss < result.best_val_loss) {
      result.best_val_loss = val.loss;
      result.best_epoch = epoch;
      best = m;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= cfg.patience) break;
    }
  }

  m = std::move(best);
  return result;
}

}  // namespace histlayer
