// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "frag/error.hpp"

namespace frag {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moments. State is kept per parameter block;
/// the block layout must not change between steps.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
            double learning_rate) {
    if (params.size() != grads.size()) throw ShapeMismatch("adam: parameter/gradient block count differs");
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw ShapeMismatch("adam: parameter layout changed");
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto p = params[b];
      auto g = grads[b];
      if (p.size() != g.size() || p.size() != first_[b].size())
        throw ShapeMismatch("adam: block size mismatch");
      auto& m = first_[b];
      auto& v = second_[b];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] = static_cast<float>(p[i] - learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
      }
    }
  }

  std::size_t steps() const noexcept { return steps_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

}  // namespace frag
