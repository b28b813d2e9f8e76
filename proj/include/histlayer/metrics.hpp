#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "histlayer/model.hpp"
#include "histlayer/train.hpp"

namespace histlayer {

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw std::invalid_argument("accuracy: need equal, non-empty prediction and label lists");
  }
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return 100.0 * correct / preds.size();
}

struct ConfusionMatrix {
  int classes = 0;
  std::vector<long long> counts;  // (true, predicted) row-major

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int c) : classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}

  long long& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
  long long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * classes + pred]; }

  long long total() const {
    long long t = 0;
    for (long long v : counts) t += v;
    return t;
  }

  long long row_total(int truth) const {
    long long t = 0;
    for (int p = 0; p < classes; ++p) t += at(truth, p);
    return t;
  }

  // Rows divided by their totals; empty rows stay zero.
  std::vector<double> row_normalized() const {
    std::vector<double> out(counts.size(), 0.0);
    for (int t = 0; t < classes; ++t) {
      const long long rt = row_total(t);
      if (rt == 0) continue;
      for (int p = 0; p < classes; ++p) {
        out[static_cast<std::size_t>(t) * classes + p] = static_cast<double>(at(t, p)) / rt;
      }
    }
    return out;
  }

  void add(const ConfusionMatrix& o) {
    if (o.classes != classes) throw std::invalid_argument("ConfusionMatrix::add: class count mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                                 int classes) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("confusion: prediction/label count mismatch");
  }
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes || preds[i] < 0 || preds[i] >= classes) {
      throw std::invalid_argument("confusion: class index out of range [0, " +
                                  std::to_string(classes) + ")");
    }
    ++m.at(labels[i], preds[i]);
  }
  return m;
}

// One-vs-rest Fisher's discriminant ratio per class, in log space:
//   ln( ||mean_c - mean_rest||^2 / (tr cov_c + tr cov_rest + eps) )
// Covariances are unbiased (n-1). Large values mean the class is compact and
// far from everything else.
inline std::vector<double> fdr_per_class(const Tensor& features, const std::vector<int>& labels,
                                         int num_classes) {
  constexpr double kEps = 1e-12;
  const int n = features.n();
  const int d = features.c();
  if (features.h() != 1 || features.w() != 1) {
    throw std::invalid_argument("fdr_per_class: features must be (N, d, 1, 1)");
  }
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("fdr_per_class: label count mismatch");
  }
  std::vector<int> class_count(num_classes, 0);
  for (int lab : labels) {
    if (lab < 0 || lab >= num_classes) {
      throw std::invalid_argument("fdr_per_class: label " + std::to_string(lab) + " out of range");
    }
    ++class_count[lab];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (class_count[c] < 2) {
      throw std::invalid_argument("fdr_per_class: class " + std::to_string(c) + " has only " +
                                  std::to_string(class_count[c]) + " sample(s), need at least 2");
    }
  }
  std::vector<double> out(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    const int n_c = class_count[c];
    const int n_rest = n - n_c;
    if (n_rest < 2) {
      throw std::invalid_argument("fdr_per_class: fewer than 2 samples outside class " +
                                  std::to_string(c));
    }
    std::vector<double> mean_c(d, 0.0), mean_r(d, 0.0);
    for (int i = 0; i < n; ++i) {
      auto& m = labels[i] == c ? mean_c : mean_r;
      for (int j = 0; j < d; ++j) m[j] += features.at(i, j, 0, 0);
    }
    for (int j = 0; j < d; ++j) {
      mean_c[j] /= n_c;
      mean_r[j] /= n_rest;
    }
    double sep = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = mean_c[j] - mean_r[j];
      sep += diff * diff;
    }
    double tr_c = 0.0, tr_r = 0.0;
    for (int i = 0; i < n; ++i) {
      const bool in_c = labels[i] == c;
      const auto& m = in_c ? mean_c : mean_r;
      double sq = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = features.at(i, j, 0, 0) - m[j];
        sq += diff * diff;
      }
      (in_c ? tr_c : tr_r) += sq;
    }
    tr_c /= n_c - 1;
    tr_r /= n_rest - 1;
    out[c] = std::log(sep / (tr_c + tr_r + kEps));
  }
  return out;
}

// Per-sample feature vectors taken just before the fully connected layer.
inline Tensor extract_features(const Model& m, const Tensor& images, int batch_size = 64) {
  const int n = images.n();
  const int d = m.spec.feature_count();
  Tensor out(n, d, 1, 1);
  const std::size_t stride = static_cast<std::size_t>(images.c()) * images.h() * images.w();
  for (int first = 0; first < n; first += batch_size) {
    const int count = std::min(batch_size, n - first);
    Tensor batch(count, images.c(), images.h(), images.w());
    std::copy(images.data() + first * stride, images.data() + (first + count) * stride,
              batch.data());
    ForwardCache cache;
    forward(m, batch, &cache);
    for (int i = 0; i < count; ++i) {
      for (int j = 0; j < d; ++j) out.at(first + i, j, 0, 0) = cache.features.at(i, j, 0, 0);
    }
  }
  return out;
}

}  // namespace histlayer
