#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "histlayer/tensor.hpp"

namespace histlayer {

// Valid (unpadded) cross-correlation parameters.
struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int kh = 0, kw = 0;
  int stride_h = 1, stride_w = 1;
  std::vector<double> weights;  // (out_channels, in_channels, kh, kw) row-major
  std::vector<double> bias;     // (out_channels)

  double& w(int o, int i, int y, int x) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + y) * kw + x];
  }
  double w(int o, int i, int y, int x) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + y) * kw + x];
  }

  void validate() const {
    if (out_channels < 1 || in_channels < 1 || kh < 1 || kw < 1) {
      throw std::invalid_argument("ConvParams: channels and kernel dims must be >= 1");
    }
    if (stride_h < 1 || stride_w < 1) {
      throw std::invalid_argument("ConvParams: strides must be >= 1");
    }
    if (weights.size() != static_cast<std::size_t>(out_channels) * in_channels * kh * kw ||
        bias.size() != static_cast<std::size_t>(out_channels)) {
      throw std::invalid_argument("ConvParams: weight/bias sizes inconsistent with declared shape");
    }
  }
};

struct LinearParams {
  int out_features = 0;
  int in_features = 0;
  std::vector<double> weights;  // (out_features, in_features) row-major
  std::vector<double> bias;     // (out_features)

  double& w(int o, int i) { return weights[static_cast<std::size_t>(o) * in_features + i]; }
  double w(int o, int i) const { return weights[static_cast<std::size_t>(o) * in_features + i]; }

  void validate() const {
    if (out_features < 1 || in_features < 1) {
      throw std::invalid_argument("LinearParams: feature counts must be >= 1");
    }
    if (weights.size() != static_cast<std::size_t>(out_features) * in_features ||
        bias.size() != static_cast<std::size_t>(out_features)) {
      throw std::invalid_argument("LinearParams: weight/bias sizes inconsistent with declared shape");
    }
  }
};

namespace detail {

inline int out_extent(int in, int k, int stride, const char* where) {
  if (k > in) {
    throw std::invalid_argument(std::string(where) + ": window " + std::to_string(k) +
                                " larger than input extent " + std::to_string(in));
  }
  return (in - k) / stride + 1;
}

// Window sums accumulate in extended precision so that pooling a constant
// returns that constant exactly and well-scaled window sums do not depend on
// the order of the summands.
inline Tensor window_pool(const Tensor& x, int wh, int ww, int sh, int sw, bool average) {
  if (sh < 1 || sw < 1) throw std::invalid_argument("window_pool: strides must be >= 1");
  const int oh = out_extent(x.h(), wh, sh, "window_pool");
  const int ow = out_extent(x.w(), ww, sw, "window_pool");
  Tensor out(x.n(), x.c(), oh, ow);
  const long double count = static_cast<long double>(wh) * ww;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int r = 0; r < oh; ++r) {
        for (int col = 0; col < ow; ++col) {
          long double acc = 0.0L;
          for (int s = 0; s < wh; ++s) {
            for (int t = 0; t < ww; ++t) {
              acc += x.at(n, c, r * sh + s, col * sw + t);
            }
          }
          out.at(n, c, r, col) = static_cast<double>(average ? acc / count : acc);
        }
      }
    }
  }
  return out;
}

inline Tensor window_pool_backward(int n, int c, int h, int w, int wh, int ww, int sh, int sw,
                                   const Tensor& upstream, bool average) {
  Tensor grad(n, c, h, w);
  const double scale = average ? 1.0 / (static_cast<double>(wh) * ww) : 1.0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int r = 0; r < upstream.h(); ++r) {
        for (int col = 0; col < upstream.w(); ++col) {
          const double u = upstream.at(ni, ci, r, col) * scale;
          for (int s = 0; s < wh; ++s) {
            for (int t = 0; t < ww; ++t) {
              grad.at(ni, ci, r * sh + s, col * sw + t) += u;
            }
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace detail

template <class F>
Tensor elementwise(const Tensor& x, F f) {
  Tensor out = x;
  for (double& v : out.values()) v = f(v);
  return out;
}

// ---------------------------------------------------------------------------
// conv2d

inline Tensor conv2d(const Tensor& x, const ConvParams& p) {
  p.validate();
  if (x.c() != p.in_channels) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.c()) +
                                " channels, kernel expects " + std::to_string(p.in_channels));
  }
  const int oh = detail::out_extent(x.h(), p.kh, p.stride_h, "conv2d");
  const int ow = detail::out_extent(x.w(), p.kw, p.stride_w, "conv2d");
  Tensor out(x.n(), p.out_channels, oh, ow);
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < p.out_channels; ++o) {
      for (int r = 0; r < oh; ++r) {
        for (int col = 0; col < ow; ++col) {
          double acc = 0.0;
          for (int i = 0; i < p.in_channels; ++i) {
            for (int y = 0; y < p.kh; ++y) {
              for (int xk = 0; xk < p.kw; ++xk) {
                acc += p.w(o, i, y, xk) * x.at(n, i, r * p.stride_h + y, col * p.stride_w + xk);
              }
            }
          }
          out.at(n, o, r, col) = acc + p.bias[o];
        }
      }
    }
  }
  require_finite(out, "conv2d");
  return out;
}

struct ConvGrads {
  Tensor input;
  std::vector<double> weights;
  std::vector<double> bias;
};

inline ConvGrads conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& upstream) {
  p.validate();
  if (x.c() != p.in_channels) {
    throw std::invalid_argument("conv2d_backward: input channel mismatch");
  }
  const int oh = detail::out_extent(x.h(), p.kh, p.stride_h, "conv2d_backward");
  const int ow = detail::out_extent(x.w(), p.kw, p.stride_w, "conv2d_backward");
  if (upstream.n() != x.n() || upstream.c() != p.out_channels || upstream.h() != oh ||
      upstream.w() != ow) {
    throw std::invalid_argument("conv2d_backward: upstream shape " + upstream.shape_str() +
                                " does not match output shape");
  }
  ConvGrads g{Tensor(x.n(), x.c(), x.h(), x.w()),
              std::vector<double>(p.weights.size(), 0.0),
              std::vector<double>(p.bias.size(), 0.0)};
  auto gw = [&](int o, int i, int y, int xk) -> double& {
    return g.weights[((static_cast<std::size_t>(o) * p.in_channels + i) * p.kh + y) * p.kw + xk];
  };
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < p.out_channels; ++o) {
      for (int r = 0; r < oh; ++r) {
        for (int col = 0; col < ow; ++col) {
          const double u = upstream.at(n, o, r, col);
          g.bias[o] += u;
          for (int i = 0; i < p.in_channels; ++i) {
            for (int y = 0; y < p.kh; ++y) {
              for (int xk = 0; xk < p.kw; ++xk) {
                const int hh = r * p.stride_h + y;
                const int ww = col * p.stride_w + xk;
                gw(o, i, y, xk) += u * x.at(n, i, hh, ww);
                g.input.at(n, i, hh, ww) += u * p.w(o, i, y, xk);
              }
            }
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// pooling

inline Tensor avg_pool2d(const Tensor& x, int wh, int ww, int sh = 1, int sw = 1) {
  Tensor out = detail::window_pool(x, wh, ww, sh, sw, /*average=*/true);
  require_finite(out, "avg_pool2d");
  return out;
}

inline Tensor avg_pool2d_backward(const Tensor& x, int wh, int ww, int sh, int sw,
                                  const Tensor& upstream) {
  return detail::window_pool_backward(x.n(), x.c(), x.h(), x.w(), wh, ww, sh, sw, upstream,
                                      /*average=*/true);
}

inline Tensor global_avg_pool(const Tensor& x) {
  if (x.h() < 1 || x.w() < 1) {
    throw std::invalid_argument("global_avg_pool: empty spatial extent");
  }
  Tensor out(x.n(), x.c(), 1, 1);
  const long double count = static_cast<long double>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      long double acc = 0.0L;
      for (int h = 0; h < x.h(); ++h) {
        for (int w = 0; w < x.w(); ++w) acc += x.at(n, c, h, w);
      }
      out.at(n, c, 0, 0) = static_cast<double>(acc / count);
    }
  }
  require_finite(out, "global_avg_pool");
  return out;
}

inline Tensor global_avg_pool_backward(const Tensor& x, const Tensor& upstream) {
  Tensor grad(x.n(), x.c(), x.h(), x.w());
  const double scale = 1.0 / (static_cast<double>(x.h()) * x.w());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double u = upstream.at(n, c, 0, 0) * scale;
      for (int h = 0; h < x.h(); ++h) {
        for (int w = 0; w < x.w(); ++w) grad.at(n, c, h, w) = u;
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// activations

inline Tensor relu(const Tensor& x) {
  return elementwise(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

inline Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
  if (!x.same_shape(upstream)) {
    throw std::invalid_argument("relu_backward: upstream shape mismatch");
  }
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (x[i] <= 0.0) grad[i] = 0.0;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// feature concatenation ((N, F, 1, 1) tensors)

inline Tensor concat_features(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n()) {
    throw std::invalid_argument("concat_features: batch sizes differ (" + std::to_string(a.n()) +
                                " vs " + std::to_string(b.n()) + ")");
  }
  if (a.h() != 1 || a.w() != 1 || b.h() != 1 || b.w() != 1) {
    throw std::invalid_argument("concat_features: inputs must be flattened (N, F, 1, 1)");
  }
  Tensor out(a.n(), a.c() + b.c(), 1, 1);
  for (int n = 0; n < a.n(); ++n) {
    for (int f = 0; f < a.c(); ++f) out.at(n, f, 0, 0) = a.at(n, f, 0, 0);
    for (int f = 0; f < b.c(); ++f) out.at(n, a.c() + f, 0, 0) = b.at(n, f, 0, 0);
  }
  return out;
}

inline std::pair<Tensor, Tensor> split_features(const Tensor& g, int fa, int fb) {
  if (g.c() != fa + fb || g.h() != 1 || g.w() != 1) {
    throw std::invalid_argument("split_features: shape does not split into " + std::to_string(fa) +
                                "+" + std::to_string(fb));
  }
  Tensor a(g.n(), fa, 1, 1), b(g.n(), fb, 1, 1);
  for (int n = 0; n < g.n(); ++n) {
    for (int f = 0; f < fa; ++f) a.at(n, f, 0, 0) = g.at(n, f, 0, 0);
    for (int f = 0; f < fb; ++f) b.at(n, f, 0, 0) = g.at(n, fa + f, 0, 0);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// linear head ((N, F, 1, 1) in, (N, out, 1, 1) out)

inline Tensor linear(const Tensor& x, const LinearParams& p) {
  p.validate();
  if (x.c() != p.in_features || x.h() != 1 || x.w() != 1) {
    throw std::invalid_argument("linear: input " + x.shape_str() + " incompatible with " +
                                std::to_string(p.in_features) + " input features");
  }
  Tensor out(x.n(), p.out_features, 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < p.out_features; ++o) {
      double acc = p.bias[o];
      for (int i = 0; i < p.in_features; ++i) acc += p.w(o, i) * x.at(n, i, 0, 0);
      out.at(n, o, 0, 0) = acc;
    }
  }
  require_finite(out, "linear");
  return out;
}

struct LinearGrads {
  Tensor input;
  std::vector<double> weights;
  std::vector<double> bias;
};

inline LinearGrads linear_backward(const Tensor& x, const LinearParams& p, const Tensor& upstream) {
  p.validate();
  if (x.c() != p.in_features || upstream.c() != p.out_features || upstream.n() != x.n()) {
    throw std::invalid_argument("linear_backward: shape mismatch");
  }
  LinearGrads g{Tensor(x.n(), x.c(), 1, 1),
                std::vector<double>(p.weights.size(), 0.0),
                std::vector<double>(p.bias.size(), 0.0)};
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < p.out_features; ++o) {
      const double u = upstream.at(n, o, 0, 0);
      g.bias[o] += u;
      for (int i = 0; i < p.in_features; ++i) {
        g.weights[static_cast<std::size_t>(o) * p.in_features + i] += u * x.at(n, i, 0, 0);
        g.input.at(n, i, 0, 0) += u * p.w(o, i);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// loss

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad_logits;  // (softmax - onehot) / N
};

inline LossAndGrad softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.h() != 1 || logits.w() != 1) {
    throw std::invalid_argument("softmax_cross_entropy: logits must be (N, K, 1, 1)");
  }
  const int n = logits.n();
  const int k = logits.c();
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(n));
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(lab) +
                                  " out of range [0, " + std::to_string(k) + ")");
    }
  }
  LossAndGrad out;
  out.grad_logits = Tensor(n, k, 1, 1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double m = logits.at(i, 0, 0, 0);
    for (int j = 1; j < k; ++j) m = std::max(m, logits.at(i, j, 0, 0));
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(logits.at(i, j, 0, 0) - m);
    const double log_denom = std::log(denom);
    total += log_denom - (logits.at(i, labels[i], 0, 0) - m);
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(logits.at(i, j, 0, 0) - m) / denom;
      out.grad_logits.at(i, j, 0, 0) = (p - (j == labels[i] ? 1.0 : 0.0)) / n;
    }
  }
  out.loss = total / n;
  require_finite(out.grad_logits, "softmax_cross_entropy");
  return out;
}

}  // namespace histlayer
