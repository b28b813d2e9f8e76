#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "histlayer/histogram.hpp"
#include "histlayer/ops.hpp"
#include "histlayer/rng.hpp"
#include "histlayer/tensor.hpp"

namespace histlayer {

enum class ModelVariant { kConvOnly, kHistOnly, kCombination };

// The three small architectures used in the synthetic-texture experiments:
// feature extractor (3x3 conv + ReLU, histogram layer, or both in parallel)
// -> global average pooling -> fully connected output layer.
struct ModelSpec {
  ModelVariant variant = ModelVariant::kCombination;
  int in_channels = 1;
  int feature_channels = 3;  // conv output channels; also the histogram bin count
  int kernel = 3;
  int num_classes = 9;
  HistogramConfig hist;  // kHistOnly / kCombination

  bool has_conv() const { return variant != ModelVariant::kHistOnly; }
  bool has_hist() const { return variant != ModelVariant::kConvOnly; }

  int conv_feature_count() const { return has_conv() ? feature_channels : 0; }
  int hist_feature_count() const { return has_hist() ? hist.bins * hist.channels : 0; }
  int feature_count() const { return conv_feature_count() + hist_feature_count(); }

  int expected_parameter_count() const {
    int total = num_classes * (feature_count() + 1);
    if (has_conv()) total += feature_channels * (in_channels * kernel * kernel + 1);
    if (has_hist()) total += 2 * hist.bins * hist.channels;
    return total;
  }

  void validate() const {
    if (in_channels < 1 || feature_channels < 1 || kernel < 1 || num_classes < 2) {
      throw std::invalid_argument("ModelSpec: invalid dimensions");
    }
    if (has_hist()) {
      hist.validate();
      if (hist.reduce_channels) {
        throw std::invalid_argument("ModelSpec: synthetic models bin input channels directly");
      }
      if (hist.channels != in_channels) {
        throw std::invalid_argument("ModelSpec: histogram channel count must equal input channels");
      }
      if (hist.bins != feature_channels) {
        throw std::invalid_argument("ModelSpec: histogram bin count must equal feature_channels");
      }
    }
  }
};

inline ModelSpec synthetic_model_spec(ModelVariant variant, int num_classes = 9,
                                      Binning binning = Binning::kRBF,
                                      bool normalize_count = true, bool sum_to_one = false) {
  ModelSpec s;
  s.variant = variant;
  s.num_classes = num_classes;
  s.hist.bins = s.feature_channels;
  s.hist.channels = s.in_channels;
  s.hist.window_h = s.hist.window_w = s.kernel;
  s.hist.stride_h = s.hist.stride_w = 1;
  s.hist.binning = binning;
  s.hist.normalize_count = normalize_count;
  s.hist.sum_to_one = sum_to_one;
  s.hist.init = InitScheme::kEquispacedOnRange;
  s.hist.init_lo = 0.0;
  s.hist.init_hi = 1.0;
  return s;
}

struct Model {
  ModelSpec spec;
  ConvParams conv;       // valid when spec.has_conv()
  HistogramParams hist;  // valid when spec.has_hist()
  LinearParams fc;

  bool has_conv() const { return spec.has_conv(); }
  bool has_hist() const { return spec.has_hist(); }

  int parameter_count() const {
    int total = static_cast<int>(fc.weights.size() + fc.bias.size());
    if (has_conv()) total += static_cast<int>(conv.weights.size() + conv.bias.size());
    if (has_hist()) total += static_cast<int>(hist.centers.size() + hist.widths.size());
    return total;
  }
};

// Conv and FC weights/biases are drawn uniform on +-1/sqrt(fan_in) from
// per-group streams derived from the seed, so a given seed initializes the
// shared conv branch identically across variants. Histogram parameters follow
// the config's init scheme.
inline Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  if (spec.has_conv()) {
    m.conv.out_channels = spec.feature_channels;
    m.conv.in_channels = spec.in_channels;
    m.conv.kh = m.conv.kw = spec.kernel;
    m.conv.stride_h = m.conv.stride_w = 1;
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_channels) * spec.kernel * spec.kernel);
    SplitMix64 rng(hash64(seed, 1));
    m.conv.weights.resize(static_cast<std::size_t>(spec.feature_channels) * spec.in_channels *
                          spec.kernel * spec.kernel);
    m.conv.bias.resize(spec.feature_channels);
    for (double& v : m.conv.weights) v = rng.uniform(-bound, bound);
    for (double& v : m.conv.bias) v = rng.uniform(-bound, bound);
  }
  if (spec.has_hist()) {
    m.hist = init_params(spec.hist, hash64(seed, 2));
  }
  m.fc.in_features = spec.feature_count();
  m.fc.out_features = spec.num_classes;
  const double bound = 1.0 / std::sqrt(static_cast<double>(m.fc.in_features));
  SplitMix64 rng(hash64(seed, 3));
  m.fc.weights.resize(static_cast<std::size_t>(m.fc.out_features) * m.fc.in_features);
  m.fc.bias.resize(m.fc.out_features);
  for (double& v : m.fc.weights) v = rng.uniform(-bound, bound);
  for (double& v : m.fc.bias) v = rng.uniform(-bound, bound);

  if (m.parameter_count() != spec.expected_parameter_count()) {
    throw std::logic_error("build_model: parameter count " + std::to_string(m.parameter_count()) +
                           " does not match expected " +
                           std::to_string(spec.expected_parameter_count()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// forward / backward

struct ForwardCache {
  Tensor input;
  Tensor conv_pre;   // before ReLU
  Tensor conv_act;   // after ReLU
  Tensor hist_maps;
  Tensor features;   // (N, d, 1, 1), conv features first
  Tensor logits;
};

inline Tensor forward(const Model& m, const Tensor& batch, ForwardCache* cache = nullptr) {
  if (batch.c() != m.spec.in_channels) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.c()) +
                                " channels, model expects " + std::to_string(m.spec.in_channels));
  }
  Tensor f_conv, f_hist;
  Tensor conv_pre, conv_act, hist_maps;
  if (m.has_conv()) {
    conv_pre = conv2d(batch, m.conv);
    conv_act = relu(conv_pre);
    f_conv = global_avg_pool(conv_act);
  }
  if (m.has_hist()) {
    hist_maps = bin_forward(batch, m.hist, m.spec.hist).maps;
    f_hist = global_avg_pool(hist_maps);
  }
  Tensor features;
  if (m.has_conv() && m.has_hist()) {
    features = concat_features(f_conv, f_hist);
  } else {
    features = m.has_conv() ? std::move(f_conv) : std::move(f_hist);
  }
  Tensor logits = linear(features, m.fc);
  if (cache != nullptr) {
    cache->input = batch;
    cache->conv_pre = std::move(conv_pre);
    cache->conv_act = std::move(conv_act);
    cache->hist_maps = std::move(hist_maps);
    cache->features = std::move(features);
    cache->logits = logits;
  }
  return logits;
}

struct Gradients {
  std::vector<double> conv_weights, conv_bias;
  std::vector<double> hist_centers, hist_widths;
  std::vector<double> fc_weights, fc_bias;
};

struct ParamView {
  const char* name;
  std::span<double> values;
};

inline std::vector<ParamView> param_views(Model& m) {
  std::vector<ParamView> v;
  if (m.has_conv()) {
    v.push_back({"conv.weights", m.conv.weights});
    v.push_back({"conv.bias", m.conv.bias});
  }
  if (m.has_hist()) {
    v.push_back({"hist.centers", m.hist.centers});
    v.push_back({"hist.widths", m.hist.widths});
  }
  v.push_back({"fc.weights", m.fc.weights});
  v.push_back({"fc.bias", m.fc.bias});
  return v;
}

inline std::vector<ParamView> grad_views(Gradients& g, const Model& m) {
  std::vector<ParamView> v;
  if (m.has_conv()) {
    v.push_back({"conv.weights", g.conv_weights});
    v.push_back({"conv.bias", g.conv_bias});
  }
  if (m.has_hist()) {
    v.push_back({"hist.centers", g.hist_centers});
    v.push_back({"hist.widths", g.hist_widths});
  }
  v.push_back({"fc.weights", g.fc_weights});
  v.push_back({"fc.bias", g.fc_bias});
  return v;
}

inline Gradients backward(const Model& m, const ForwardCache& cache, const Tensor& grad_logits) {
  if (cache.input.n() == 0 || cache.features.c() != m.fc.in_features ||
      cache.logits.c() != m.fc.out_features ||
      (m.has_conv() && cache.conv_pre.n() != cache.input.n()) ||
      (m.has_hist() && cache.hist_maps.n() != cache.input.n())) {
    throw std::invalid_argument("backward: cache does not match this model's forward pass");
  }
  if (!grad_logits.same_shape(cache.logits)) {
    throw std::invalid_argument("backward: grad_logits shape " + grad_logits.shape_str() +
                                " does not match logits " + cache.logits.shape_str());
  }
  Gradients g;
  LinearGrads lin = linear_backward(cache.features, m.fc, grad_logits);
  g.fc_weights = std::move(lin.weights);
  g.fc_bias = std::move(lin.bias);

  Tensor d_conv_feat, d_hist_feat;
  if (m.has_conv() && m.has_hist()) {
    auto parts = split_features(lin.input, m.spec.conv_feature_count(), m.spec.hist_feature_count());
    d_conv_feat = std::move(parts.first);
    d_hist_feat = std::move(parts.second);
  } else if (m.has_conv()) {
    d_conv_feat = std::move(lin.input);
  } else {
    d_hist_feat = std::move(lin.input);
  }
  if (m.has_conv()) {
    Tensor d_act = global_avg_pool_backward(cache.conv_act, d_conv_feat);
    Tensor d_pre = relu_backward(cache.conv_pre, d_act);
    ConvGrads cg = conv2d_backward(cache.input, m.conv, d_pre);
    g.conv_weights = std::move(cg.weights);
    g.conv_bias = std::move(cg.bias);
  }
  if (m.has_hist()) {
    Tensor d_maps = global_avg_pool_backward(cache.hist_maps, d_hist_feat);
    HistogramGrads hg = bin_backward(cache.input, m.hist, m.spec.hist, d_maps);
    g.hist_centers = std::move(hg.centers);
    g.hist_widths = std::move(hg.widths);
  }
  return g;
}

// ---------------------------------------------------------------------------
// serialization

inline std::string variant_to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kConvOnly: return "conv";
    case ModelVariant::kHistOnly: return "hist";
    case ModelVariant::kCombination: return "combination";
  }
  throw std::logic_error("variant_to_string: unknown variant");
}

inline ModelVariant variant_from_string(const std::string& s) {
  if (s == "conv") return ModelVariant::kConvOnly;
  if (s == "hist") return ModelVariant::kHistOnly;
  if (s == "combination") return ModelVariant::kCombination;
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

inline std::string binning_to_string(Binning b) {
  return b == Binning::kRBF ? "rbf" : "linear";
}

inline Binning binning_from_string(const std::string& s) {
  if (s == "rbf") return Binning::kRBF;
  if (s == "linear") return Binning::kPiecewiseLinear;
  throw std::invalid_argument("unknown binning kind '" + s + "'");
}

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json j;
  j["variant"] = variant_to_string(m.spec.variant);
  j["in_channels"] = m.spec.in_channels;
  j["feature_channels"] = m.spec.feature_channels;
  j["kernel"] = m.spec.kernel;
  j["num_classes"] = m.spec.num_classes;
  if (m.has_hist()) {
    j["hist_config"] = {{"bins", m.spec.hist.bins},
                        {"channels", m.spec.hist.channels},
                        {"window", {m.spec.hist.window_h, m.spec.hist.window_w}},
                        {"stride", {m.spec.hist.stride_h, m.spec.hist.stride_w}},
                        {"binning", binning_to_string(m.spec.hist.binning)},
                        {"normalize_count", m.spec.hist.normalize_count},
                        {"sum_to_one", m.spec.hist.sum_to_one}};
    j["hist"] = params_to_json(m.hist);
  }
  if (m.has_conv()) {
    j["conv"] = {{"out_channels", m.conv.out_channels},
                 {"in_channels", m.conv.in_channels},
                 {"kernel", {m.conv.kh, m.conv.kw}},
                 {"weights", m.conv.weights},
                 {"bias", m.conv.bias}};
  }
  j["fc"] = {{"out_features", m.fc.out_features},
             {"in_features", m.fc.in_features},
             {"weights", m.fc.weights},
             {"bias", m.fc.bias}};
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.variant = variant_from_string(j.at("variant").get<std::string>());
  spec.in_channels = j.at("in_channels").get<int>();
  spec.feature_channels = j.at("feature_channels").get<int>();
  spec.kernel = j.at("kernel").get<int>();
  spec.num_classes = j.at("num_classes").get<int>();
  if (spec.has_hist()) {
    const auto& hc = j.at("hist_config");
    spec.hist.bins = hc.at("bins").get<int>();
    spec.hist.channels = hc.at("channels").get<int>();
    spec.hist.window_h = hc.at("window").at(0).get<int>();
    spec.hist.window_w = hc.at("window").at(1).get<int>();
    spec.hist.stride_h = hc.at("stride").at(0).get<int>();
    spec.hist.stride_w = hc.at("stride").at(1).get<int>();
    spec.hist.binning = binning_from_string(hc.at("binning").get<std::string>());
    spec.hist.normalize_count = hc.at("normalize_count").get<bool>();
    spec.hist.sum_to_one = hc.at("sum_to_one").get<bool>();
  }
  Model m = build_model(spec, 0);
  if (m.has_hist()) m.hist = params_from_json(j.at("hist"));
  if (m.has_conv()) {
    m.conv.weights = j.at("conv").at("weights").get<std::vector<double>>();
    m.conv.bias = j.at("conv").at("bias").get<std::vector<double>>();
    m.conv.validate();
  }
  m.fc.weights = j.at("fc").at("weights").get<std::vector<double>>();
  m.fc.bias = j.at("fc").at("bias").get<std::vector<double>>();
  m.fc.validate();
  if (m.has_hist()) m.hist.validate(m.spec.hist);
  return m;
}

}  // namespace histlayer
