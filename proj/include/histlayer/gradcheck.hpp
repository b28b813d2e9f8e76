#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "histlayer/model.hpp"

namespace histlayer {

// Relative disagreement of two gradient vectors:
// ||a - n||_2 / max(||a||_2, ||n||_2, floor). The floor keeps vanishing
// gradients from turning finite-difference noise into a large ratio.
inline double rel_err_norm(std::span<const double> analytic, std::span<const double> numeric,
                           double floor = 1e-8) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("rel_err_norm: size mismatch");
  }
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff2 += d * d;
    a2 += analytic[i] * analytic[i];
    n2 += numeric[i] * numeric[i];
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
}

struct GroupCheck {
  std::string group;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  double max_rel_err = 0.0;
  double step = 0.0;
  double tol = 0.0;
  bool passed = false;
};

// Central finite differences of the cross-entropy loss against the analytic
// backward pass, per parameter group.
inline GradCheckReport finite_diff_check(Model& model, const Tensor& batch,
                                         const std::vector<int>& labels, double step = 1e-5,
                                         double tol = 1e-5) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be > 0");
  const auto loss_at = [&]() {
    return softmax_cross_entropy(forward(model, batch), labels).loss;
  };

  ForwardCache cache;
  Tensor logits = forward(model, batch, &cache);
  LossAndGrad lg = softmax_cross_entropy(logits, labels);
  Gradients analytic = backward(model, cache, lg.grad_logits);

  GradCheckReport report;
  report.step = step;
  report.tol = tol;
  auto pv = param_views(model);
  auto gv = grad_views(analytic, model);
  for (std::size_t g = 0; g < pv.size(); ++g) {
    std::vector<double> numeric(pv[g].values.size());
    for (std::size_t i = 0; i < pv[g].values.size(); ++i) {
      const double saved = pv[g].values[i];
      pv[g].values[i] = saved + step;
      const double plus = loss_at();
      pv[g].values[i] = saved - step;
      const double minus = loss_at();
      pv[g].values[i] = saved;
      numeric[i] = (plus - minus) / (2.0 * step);
    }
    const double err = rel_err_norm(gv[g].values, numeric);
    report.groups.push_back({pv[g].name, err});
    report.max_rel_err = std::max(report.max_rel_err, err);
  }
  report.passed = report.max_rel_err <= tol;
  return report;
}

}  // namespace histlayer
