#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace histlayer {

// Dense rank-4 array of doubles in row-major (batch, channel, height, width)
// order. The single value type shared by every layer in the library.
//
// Vectors of per-sample features are carried as (N, F, 1, 1) tensors.
class Tensor {
 public:
  Tensor() = default;

  Tensor(int n, int c, int h, int w, double value = 0.0)
      : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
      throw std::invalid_argument("Tensor: negative dimension (" + shape_str(n, c, h, w) + ")");
    }
    data_.assign(static_cast<std::size_t>(n) * c * h * w, value);
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }

  double& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string shape_str() const { return shape_str(n_, c_, h_, w_); }

  static std::string shape_str(int n, int c, int h, int w) {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + h) * w_ + w;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

inline bool all_finite(const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Every op in the library promises finite outputs for finite inputs; this is
// the fail-fast hook they use on exit.
inline void require_finite(const Tensor& t, const char* where) {
  if (!all_finite(t)) {
    throw std::runtime_error(std::string(where) + ": non-finite value in tensor " + t.shape_str());
  }
}

}  // namespace histlayer
