#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "histlayer/model.hpp"

namespace histlayer {

namespace detail {

inline void check_step_views(const std::vector<ParamView>& params,
                             const std::vector<ParamView>& grads,
                             std::vector<std::vector<double>>& buffers, const char* where) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument(std::string(where) + ": parameter/gradient group count mismatch");
  }
  if (buffers.empty()) {
    for (const auto& p : params) buffers.emplace_back(p.values.size(), 0.0);
  }
  if (buffers.size() != params.size()) {
    throw std::invalid_argument(std::string(where) + ": optimizer state does not match parameter groups");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].values.size() != grads[i].values.size() ||
        params[i].values.size() != buffers[i].size()) {
      throw std::invalid_argument(std::string(where) + ": shape mismatch in group '" +
                                  params[i].name + "'");
    }
  }
}

}  // namespace detail

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
    detail::check_step_views(params, grads, m_, "Adam::step");
    if (v_.empty()) {
      for (const auto& p : params) v_.emplace_back(p.values.size(), 0.0);
    }
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, steps_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, steps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].values;
      auto g = grads[i].values;
      for (std::size_t j = 0; j < p.size(); ++j) {
        m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
        v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        p[j] -= cfg_.lr * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + cfg_.eps);
      }
    }
  }

  long steps() const { return steps_; }

 private:
  AdamConfig cfg_;
  long steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct SgdMomentumConfig {
  double lr = 1e-3;
  double alpha = 0.9;
};

class SgdMomentum {
 public:
  explicit SgdMomentum(SgdMomentumConfig cfg = {}) : cfg_(cfg) {}

  // v <- alpha*v + g; p <- p - lr*v
  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
    detail::check_step_views(params, grads, velocity_, "SgdMomentum::step");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].values;
      auto g = grads[i].values;
      for (std::size_t j = 0; j < p.size(); ++j) {
        velocity_[i][j] = cfg_.alpha * velocity_[i][j] + g[j];
        p[j] -= cfg_.lr * velocity_[i][j];
      }
    }
  }

 private:
  SgdMomentumConfig cfg_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace histlayer
