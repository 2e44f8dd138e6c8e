#pragma once

#include <cmath>
#include <vector>

#include "famnet/tape.hpp"

namespace famnet {

// Exponential learning-rate schedule: lr_t = lr0 * gamma^epoch.
inline double lr_at_epoch(double lr0, double gamma, int epoch) {
  FAMNET_CHECK(lr0 > 0.0 && gamma > 0.0 && epoch >= 0, "lr_at_epoch: bad arguments");
  return lr0 * std::pow(gamma, static_cast<double>(epoch));
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

// Adam over an explicit parameter subset. Parameters excluded from the list
// are never touched, which is how single-task mode freezes the FAUD stack.
class Adam {
 public:
  Adam(std::vector<NodePtr> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params_[i]->val.numel()), 0.0f);
      v_[i].assign(static_cast<size_t>(params_[i]->val.numel()), 0.0f);
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const std::vector<NodePtr>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  // Global-norm gradient clip followed by a bias-corrected Adam update.
  void step() {
    ++t_;
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (auto& p : params_) {
        if (!p->has_grad) continue;
        for (float g : p->grad.data) sq += static_cast<double>(g) * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      NodePtr& p = params_[i];
      if (!p->has_grad) continue;
      float* w = p->val.ptr();
      const float* g = p->grad.ptr();
      float* m = m_[i].data();
      float* v = v_[i].data();
      const int64_t n = p->val.numel();
      for (int64_t k = 0; k < n; ++k) {
        const double gk = static_cast<double>(g[k]) * scale;
        m[k] = static_cast<float>(cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk);
        v[k] = static_cast<float>(cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk);
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        w[k] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  std::vector<NodePtr> params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace famnet
