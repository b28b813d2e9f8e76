#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "histlayer/ops.hpp"
#include "histlayer/rng.hpp"
#include "histlayer/tensor.hpp"

namespace histlayer {

// Localized soft-binning histogram layer.
//
// Each input value v is assigned a fractional membership in every bin via a
// smooth kernel with learnable center mu and inverse-spread gamma:
//
//   RBF binning:              phi_b(v) = exp(-(gamma_bk * (v - mu_bk))^2)
//   piecewise-linear binning: phi_b(v) = max(0, 1 - |gamma_bk| * |v - mu_bk|)
//
// Memberships are aggregated over a sliding S x T window; with count
// normalization the window aggregate is divided by S*T, turning the output
// into a local relative frequency. Output maps have one channel per
// (bin, channel) pair, laid out as channel index = k*B + b.

enum class Binning { kRBF, kPiecewiseLinear };
enum class InitScheme { kEquispacedOnRange, kUniformSymmetric };

struct HistogramConfig {
  int bins = 4;      // B
  int channels = 1;  // K, channel count the binning operates on
  int window_h = 3, window_w = 3;  // S, T
  int stride_h = 1, stride_w = 1;
  Binning binning = Binning::kRBF;
  bool normalize_count = true;  // divide window aggregates by S*T
  bool sum_to_one = false;      // normalize each element's memberships across bins
  bool reduce_channels = false; // map input channels to K with a learnable 1x1 conv first
  InitScheme init = InitScheme::kEquispacedOnRange;
  double init_lo = 0.0, init_hi = 1.0;  // EquispacedOnRange only

  void validate() const {
    if (bins < 1 || channels < 1) {
      throw std::invalid_argument("HistogramConfig: bins and channels must be >= 1");
    }
    if (window_h < 1 || window_w < 1 || stride_h < 1 || stride_w < 1) {
      throw std::invalid_argument("HistogramConfig: window and stride must be >= 1");
    }
  }
};

// Learnable bin centers and inverse-spreads, one pair per (bin, channel).
struct HistogramParams {
  int bins = 0;
  int channels = 0;
  std::vector<double> centers;  // (B, K) row-major: centers[b*K + k]
  std::vector<double> widths;   // (B, K) row-major

  double& center(int b, int k) { return centers[static_cast<std::size_t>(b) * channels + k]; }
  double center(int b, int k) const { return centers[static_cast<std::size_t>(b) * channels + k]; }
  double& width(int b, int k) { return widths[static_cast<std::size_t>(b) * channels + k]; }
  double width(int b, int k) const { return widths[static_cast<std::size_t>(b) * channels + k]; }

  void validate(const HistogramConfig& cfg) const {
    if (bins != cfg.bins || channels != cfg.channels ||
        centers.size() != static_cast<std::size_t>(bins) * channels ||
        widths.size() != centers.size()) {
      throw std::invalid_argument("HistogramParams: shape disagrees with config (B=" +
                                  std::to_string(cfg.bins) + ", K=" + std::to_string(cfg.channels) + ")");
    }
    for (double v : centers) {
      if (!std::isfinite(v)) throw std::invalid_argument("HistogramParams: non-finite center");
    }
    for (double v : widths) {
      if (!std::isfinite(v)) throw std::invalid_argument("HistogramParams: non-finite width");
    }
  }
};

// (N, B*K, R, C) histogram feature maps, channel index = k*B + b.
struct HistogramOutput {
  Tensor maps;
};

inline constexpr double kSumToOneEps = 1e-12;

namespace detail {

inline double rbf_response(double v, double mu, double gamma) {
  const double t = gamma * (v - mu);
  return std::exp(-(t * t));
}

inline double hat_response(double v, double mu, double gamma) {
  const double a = std::abs(gamma) * std::abs(v - mu);
  return a < 1.0 ? 1.0 - a : 0.0;
}

inline void check_hist_input(const Tensor& x, const HistogramParams& p,
                             const HistogramConfig& cfg, const char* where) {
  cfg.validate();
  p.validate(cfg);
  if (x.c() != cfg.channels) {
    throw std::invalid_argument(std::string(where) + ": input has " + std::to_string(x.c()) +
                                " channels, config expects " + std::to_string(cfg.channels));
  }
  out_extent(x.h(), cfg.window_h, cfg.stride_h, where);
  out_extent(x.w(), cfg.window_w, cfg.stride_w, where);
}

}  // namespace detail

// Per-element bin memberships, before any spatial aggregation. Output shape
// (N, B*K, M, N'), matching x spatially. With sum_to_one each element's B
// memberships are divided by their sum plus kSumToOneEps.
inline Tensor bin_responses(const Tensor& x, const HistogramParams& p, const HistogramConfig& cfg) {
  detail::check_hist_input(x, p, cfg, "bin_responses");
  const int b_count = cfg.bins;
  const int k_count = cfg.channels;
  Tensor out(x.n(), b_count * k_count, x.h(), x.w());
  std::vector<double> phi(b_count);
  for (int n = 0; n < x.n(); ++n) {
    for (int k = 0; k < k_count; ++k) {
      for (int h = 0; h < x.h(); ++h) {
        for (int w = 0; w < x.w(); ++w) {
          const double v = x.at(n, k, h, w);
          for (int b = 0; b < b_count; ++b) {
            phi[b] = cfg.binning == Binning::kRBF
                         ? detail::rbf_response(v, p.center(b, k), p.width(b, k))
                         : detail::hat_response(v, p.center(b, k), p.width(b, k));
          }
          if (cfg.sum_to_one) {
            double denom = kSumToOneEps;
            for (int b = 0; b < b_count; ++b) denom += phi[b];
            for (int b = 0; b < b_count; ++b) phi[b] /= denom;
          }
          for (int b = 0; b < b_count; ++b) out.at(n, k * b_count + b, h, w) = phi[b];
        }
      }
    }
  }
  require_finite(out, "bin_responses");
  return out;
}

inline HistogramOutput bin_forward(const Tensor& x, const HistogramParams& p,
                                   const HistogramConfig& cfg) {
  Tensor resp = bin_responses(x, p, cfg);
  return {detail::window_pool(resp, cfg.window_h, cfg.window_w, cfg.stride_h, cfg.stride_w,
                              cfg.normalize_count)};
}

inline HistogramOutput rbf_bin_forward(const Tensor& x, const HistogramParams& p,
                                       const HistogramConfig& cfg) {
  if (cfg.binning != Binning::kRBF) {
    throw std::invalid_argument("rbf_bin_forward: config requests non-RBF binning");
  }
  return bin_forward(x, p, cfg);
}

inline HistogramOutput linear_bin_forward(const Tensor& x, const HistogramParams& p,
                                          const HistogramConfig& cfg) {
  if (cfg.binning != Binning::kPiecewiseLinear) {
    throw std::invalid_argument("linear_bin_forward: config requests non-linear binning");
  }
  return bin_forward(x, p, cfg);
}

struct HistogramGrads {
  std::vector<double> centers;  // (B, K) row-major, like HistogramParams
  std::vector<double> widths;
  Tensor input;  // shaped like x; overlapping windows accumulate
};

// Reverse-mode pass for bin_forward. Differentiates the exact forward
// expression in use, including the count normalization and the sum-to-one
// division when enabled. Hat-function kinks (peak, support boundary) take
// subgradient 0.
inline HistogramGrads bin_backward(const Tensor& x, const HistogramParams& p,
                                   const HistogramConfig& cfg, const Tensor& upstream) {
  detail::check_hist_input(x, p, cfg, "bin_backward");
  const int b_count = cfg.bins;
  const int k_count = cfg.channels;
  const int rows = detail::out_extent(x.h(), cfg.window_h, cfg.stride_h, "bin_backward");
  const int cols = detail::out_extent(x.w(), cfg.window_w, cfg.stride_w, "bin_backward");
  if (upstream.n() != x.n() || upstream.c() != b_count * k_count || upstream.h() != rows ||
      upstream.w() != cols) {
    throw std::invalid_argument("bin_backward: upstream shape " + upstream.shape_str() +
                                " does not match output shape");
  }

  // Element-level upstream: transpose of the window aggregation.
  Tensor elem_up =
      detail::window_pool_backward(x.n(), b_count * k_count, x.h(), x.w(), cfg.window_h,
                                   cfg.window_w, cfg.stride_h, cfg.stride_w, upstream,
                                   cfg.normalize_count);

  HistogramGrads g{std::vector<double>(static_cast<std::size_t>(b_count) * k_count, 0.0),
                   std::vector<double>(static_cast<std::size_t>(b_count) * k_count, 0.0),
                   Tensor(x.n(), x.c(), x.h(), x.w())};
  std::vector<double> phi(b_count);
  std::vector<double> dphi(b_count);
  const auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

  for (int n = 0; n < x.n(); ++n) {
    for (int k = 0; k < k_count; ++k) {
      for (int h = 0; h < x.h(); ++h) {
        for (int w = 0; w < x.w(); ++w) {
          const double v = x.at(n, k, h, w);
          for (int b = 0; b < b_count; ++b) {
            phi[b] = cfg.binning == Binning::kRBF
                         ? detail::rbf_response(v, p.center(b, k), p.width(b, k))
                         : detail::hat_response(v, p.center(b, k), p.width(b, k));
            dphi[b] = elem_up.at(n, k * b_count + b, h, w);
          }
          if (cfg.sum_to_one) {
            // psi_b = phi_b / D with D = sum(phi) + eps, so
            // dL/dphi_b = (u_b - sum_b' u_b' psi_b') / D.
            double denom = kSumToOneEps;
            for (int b = 0; b < b_count; ++b) denom += phi[b];
            double weighted = 0.0;
            for (int b = 0; b < b_count; ++b) weighted += dphi[b] * (phi[b] / denom);
            for (int b = 0; b < b_count; ++b) dphi[b] = (dphi[b] - weighted) / denom;
          }
          double dv = 0.0;
          for (int b = 0; b < b_count; ++b) {
            const double mu = p.center(b, k);
            const double gamma = p.width(b, k);
            const double d = v - mu;
            const std::size_t parami = static_cast<std::size_t>(b) * k_count + k;
            if (cfg.binning == Binning::kRBF) {
              const double common = dphi[b] * phi[b];
              g.centers[parami] += common * 2.0 * gamma * gamma * d;
              g.widths[parami] += common * -2.0 * gamma * d * d;
              dv += common * -2.0 * gamma * gamma * d;
            } else if (phi[b] > 0.0) {
              g.centers[parami] += dphi[b] * std::abs(gamma) * sgn(d);
              g.widths[parami] += dphi[b] * -std::abs(d) * sgn(gamma);
              dv += dphi[b] * -std::abs(gamma) * sgn(d);
            }
          }
          g.input.at(n, k, h, w) = dv;
        }
      }
    }
  }
  return g;
}

inline std::vector<double> rbf_grad_centers(const Tensor& x, const HistogramParams& p,
                                            const HistogramConfig& cfg, const Tensor& upstream) {
  if (cfg.binning != Binning::kRBF) {
    throw std::invalid_argument("rbf_grad_centers: config requests non-RBF binning");
  }
  return bin_backward(x, p, cfg, upstream).centers;
}

inline std::vector<double> rbf_grad_widths(const Tensor& x, const HistogramParams& p,
                                           const HistogramConfig& cfg, const Tensor& upstream) {
  if (cfg.binning != Binning::kRBF) {
    throw std::invalid_argument("rbf_grad_widths: config requests non-RBF binning");
  }
  return bin_backward(x, p, cfg, upstream).widths;
}

inline Tensor rbf_grad_input(const Tensor& x, const HistogramParams& p, const HistogramConfig& cfg,
                             const Tensor& upstream) {
  if (cfg.binning != Binning::kRBF) {
    throw std::invalid_argument("rbf_grad_input: config requests non-RBF binning");
  }
  return std::move(bin_backward(x, p, cfg, upstream).input);
}

inline HistogramGrads linear_bin_backward(const Tensor& x, const HistogramParams& p,
                                          const HistogramConfig& cfg, const Tensor& upstream) {
  if (cfg.binning != Binning::kPiecewiseLinear) {
    throw std::invalid_argument("linear_bin_backward: config requests non-linear binning");
  }
  return bin_backward(x, p, cfg, upstream);
}

// The same layer assembled from pre-existing primitives:
//   optional 1x1 reduction conv
//   -> 1x1 conv with unit selector weights, bias = -mu   (per-bin centering)
//   -> 1x1 conv with diagonal weight gamma, bias = 0     (per-bin scaling)
//   -> elementwise square, negate, exponentiate
//   -> average pooling over the S x T window.
// Defined for RBF binning with normalized counts; sum_to_one has no slot in
// this pipeline and is rejected.
inline HistogramOutput forward_composed(const Tensor& x, const HistogramParams& p,
                                        const HistogramConfig& cfg,
                                        const ConvParams* reduce = nullptr) {
  cfg.validate();
  if (cfg.binning != Binning::kRBF || !cfg.normalize_count) {
    throw std::invalid_argument("forward_composed: requires RBF binning with normalize_count");
  }
  if (cfg.sum_to_one) {
    throw std::invalid_argument("forward_composed: sum_to_one is not expressible in the composed pipeline");
  }
  const Tensor* in = &x;
  Tensor reduced;
  if (cfg.reduce_channels) {
    if (reduce == nullptr) {
      throw std::invalid_argument("forward_composed: reduce_channels set but no reduction conv given");
    }
    if (reduce->kh != 1 || reduce->kw != 1 || reduce->out_channels != cfg.channels ||
        reduce->stride_h != 1 || reduce->stride_w != 1) {
      throw std::invalid_argument("forward_composed: reduction conv must be a stride-1 1x1 conv onto K channels");
    }
    reduced = conv2d(x, *reduce);
    in = &reduced;
  }
  detail::check_hist_input(*in, p, cfg, "forward_composed");

  const int b_count = cfg.bins;
  const int k_count = cfg.channels;
  ConvParams center;
  center.out_channels = b_count * k_count;
  center.in_channels = k_count;
  center.kh = center.kw = 1;
  center.weights.assign(static_cast<std::size_t>(b_count) * k_count * k_count, 0.0);
  center.bias.assign(static_cast<std::size_t>(b_count) * k_count, 0.0);
  ConvParams scale;
  scale.out_channels = b_count * k_count;
  scale.in_channels = b_count * k_count;
  scale.kh = scale.kw = 1;
  scale.weights.assign(static_cast<std::size_t>(b_count) * k_count * b_count * k_count, 0.0);
  scale.bias.assign(static_cast<std::size_t>(b_count) * k_count, 0.0);
  for (int k = 0; k < k_count; ++k) {
    for (int b = 0; b < b_count; ++b) {
      const int o = k * b_count + b;
      center.w(o, k, 0, 0) = 1.0;
      center.bias[o] = -p.center(b, k);
      scale.w(o, o, 0, 0) = p.width(b, k);
    }
  }
  Tensor z = conv2d(conv2d(*in, center), scale);
  z = elementwise(z, [](double v) { return std::exp(-(v * v)); });
  return {avg_pool2d(z, cfg.window_h, cfg.window_w, cfg.stride_h, cfg.stride_w)};
}

// EquispacedOnRange: bin centers at the midpoints of B equal subintervals of
// [lo, hi], all widths B/(hi-lo) (RBF spread of about one bin spacing).
// UniformSymmetric: every center and width drawn i.i.d. uniform on
// (-1/sqrt(BK), +1/sqrt(BK)); centers are drawn first, then widths, both in
// (b, k) row-major order.
inline HistogramParams init_params(const HistogramConfig& cfg, std::uint64_t seed = 0) {
  if (cfg.bins < 1 || cfg.channels < 1) {
    throw std::invalid_argument("init_params: bins and channels must be >= 1");
  }
  cfg.validate();
  HistogramParams p;
  p.bins = cfg.bins;
  p.channels = cfg.channels;
  const std::size_t total = static_cast<std::size_t>(cfg.bins) * cfg.channels;
  p.centers.resize(total);
  p.widths.resize(total);
  if (cfg.init == InitScheme::kEquispacedOnRange) {
    if (!(cfg.init_hi > cfg.init_lo)) {
      throw std::invalid_argument("init_params: equispaced init needs init_hi > init_lo");
    }
    const double span = cfg.init_hi - cfg.init_lo;
    for (int b = 0; b < cfg.bins; ++b) {
      for (int k = 0; k < cfg.channels; ++k) {
        p.center(b, k) = cfg.init_lo + (b + 0.5) * span / cfg.bins;
        p.width(b, k) = cfg.bins / span;
      }
    }
  } else {
    const double r = 1.0 / std::sqrt(static_cast<double>(total));
    SplitMix64 rng(seed);
    for (double& v : p.centers) v = rng.uniform(-r, r);
    for (double& v : p.widths) v = rng.uniform(-r, r);
  }
  return p;
}

// Flat JSON form used for checkpoints and fixtures.
inline nlohmann::json params_to_json(const HistogramParams& p) {
  return nlohmann::json{
      {"bins", p.bins}, {"channels", p.channels}, {"centers", p.centers}, {"widths", p.widths}};
}

inline HistogramParams params_from_json(const nlohmann::json& j) {
  HistogramParams p;
  p.bins = j.at("bins").get<int>();
  p.channels = j.at("channels").get<int>();
  p.centers = j.at("centers").get<std::vector<double>>();
  p.widths = j.at("widths").get<std::vector<double>>();
  if (p.bins < 1 || p.channels < 1 ||
      p.centers.size() != static_cast<std::size_t>(p.bins) * p.channels ||
      p.widths.size() != p.centers.size()) {
    throw std::invalid_argument("params_from_json: inconsistent histogram parameter payload");
  }
  return p;
}

}  // namespace histlayer
