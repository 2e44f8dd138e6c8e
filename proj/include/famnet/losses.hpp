#pragma once

#include <cmath>

#include "famnet/ops.hpp"
#include "famnet/tape.hpp"

namespace famnet {
namespace ops {

// Emotion-recognition loss on softmax probabilities and one-hot targets:
// per class  y*(1-p)^2 + 0.5*(1-y)*p^2, summed over classes, batch-meaned.
inline NodePtr loss_me(Tape& tape, const NodePtr& probs, const Tensor& target) {
  FAMNET_CHECK(probs->val.ndim() == 2, "loss_me: probs must be [N,C]");
  FAMNET_CHECK(probs->val.same_shape(target), "loss_me: target shape mismatch");
  const int N = probs->val.dim(0), C = probs->val.dim(1);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    double row_sum = 0.0;
    for (int c = 0; c < C; ++c) row_sum += probs->val.data[static_cast<size_t>(n) * C + c];
    FAMNET_CHECK(std::fabs(row_sum - 1.0) < 1e-3,
                 "loss_me: predictions not normalized (row %d sums to %.6f)", n, row_sum);
    for (int c = 0; c < C; ++c) {
      const double p = probs->val.data[static_cast<size_t>(n) * C + c];
      const double y = target.data[static_cast<size_t>(n) * C + c];
      total += y * (1.0 - p) * (1.0 - p) + 0.5 * (1.0 - y) * p * p;
    }
  }
  NodePtr o = tape.make(Tensor::scalar(static_cast<float>(total / N)), probs->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    auto tgt = std::make_shared<Tensor>(target);
    tape.record([=]() {
      if (!o->has_grad) return;
      const float g = o->grad.data[0] / static_cast<float>(N);
      float* gp = probs->g().ptr();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const size_t i = static_cast<size_t>(n) * C + c;
          const float p = probs->val.data[i];
          const float y = tgt->data[i];
          gp[i] += g * (-2.0f * y * (1.0f - p) + (1.0f - y) * p);
        }
    });
  }
  return o;
}

// Weighted multi-label BCE on sigmoid probabilities:
//   l_n = -w_n [ y_n log p_n + (1-y_n) log(1-p_n) ]
// averaged over categories, then over the batch. Probabilities are clamped
// to [eps, 1-eps]; gradient is zero in the clamped region.
inline NodePtr loss_au(Tape& tape, const NodePtr& probs, const Tensor& target,
                       const Tensor& weights, float eps = 1e-7f) {
  FAMNET_CHECK(probs->val.ndim() == 2, "loss_au: probs must be [N,A]");
  FAMNET_CHECK(probs->val.same_shape(target), "loss_au: target shape mismatch");
  const int N = probs->val.dim(0), A = probs->val.dim(1);
  FAMNET_CHECK(weights.numel() == A, "loss_au: weights size %lld != %d",
               static_cast<long long>(weights.numel()), A);
  for (float w : weights.data) FAMNET_CHECK(w > 0.0f, "loss_au: weights must be positive");

  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    double sample = 0.0;
    for (int a = 0; a < A; ++a) {
      const size_t i = static_cast<size_t>(n) * A + a;
      const double p = std::clamp<double>(probs->val.data[i], eps, 1.0 - eps);
      const double y = target.data[i];
      sample -= weights.data[static_cast<size_t>(a)] *
                (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    total += sample / A;
  }
  NodePtr o = tape.make(Tensor::scalar(static_cast<float>(total / N)), probs->requires_grad);
  if (o->requires_grad && tape.enabled()) {
    auto tgt = std::make_shared<Tensor>(target);
    auto wts = std::make_shared<Tensor>(weights);
    tape.record([=]() {
      if (!o->has_grad) return;
      const float g = o->grad.data[0] / static_cast<float>(N * A);
      float* gp = probs->g().ptr();
      for (int n = 0; n < N; ++n)
        for (int a = 0; a < A; ++a) {
          const size_t i = static_cast<size_t>(n) * A + a;
          const float p = probs->val.data[i];
          if (p <= eps || p >= 1.0f - eps) continue;
          const float y = tgt->data[i];
          gp[i] += g * wts->data[static_cast<size_t>(a)] * (-y / p + (1.0f - y) / (1.0f - p));
        }
    });
  }
  return o;
}

// Total multi-task loss with trainable homoscedastic-uncertainty weights.
// sigma_i = exp(s_i), so the combination is
//   exp(-2 s1) L_me + exp(-2 s2) L_au + s1 + s2,
// which keeps sigma positive for any finite s.
inline NodePtr uncertainty_combine(Tape& tape, const NodePtr& l_me, const NodePtr& l_au,
                                   const NodePtr& s1, const NodePtr& s2) {
  FAMNET_CHECK(l_me->val.numel() == 1 && l_au->val.numel() == 1,
               "uncertainty_combine: losses must be scalars");
  FAMNET_CHECK(s1->val.numel() == 1 && s2->val.numel() == 1,
               "uncertainty_combine: s parameters must be scalars");
  const double lme = l_me->val.data[0], lau = l_au->val.data[0];
  FAMNET_CHECK(std::isfinite(lme) && lme >= 0.0 && std::isfinite(lau) && lau >= 0.0,
               "uncertainty_combine: losses must be finite and non-negative (%.4g, %.4g)", lme,
               lau);
  const double v1 = s1->val.data[0], v2 = s2->val.data[0];
  const double out = std::exp(-2.0 * v1) * lme + std::exp(-2.0 * v2) * lau + v1 + v2;
  const bool rg =
      l_me->requires_grad || l_au->requires_grad || s1->requires_grad || s2->requires_grad;
  NodePtr o = tape.make(Tensor::scalar(static_cast<float>(out)), rg);
  if (rg && tape.enabled()) {
    tape.record([=]() {
      if (!o->has_grad) return;
      const float g = o->grad.data[0];
      const float w1 = static_cast<float>(std::exp(-2.0 * s1->val.data[0]));
      const float w2 = static_cast<float>(std::exp(-2.0 * s2->val.data[0]));
      if (l_me->requires_grad) l_me->g().data[0] += g * w1;
      if (l_au->requires_grad) l_au->g().data[0] += g * w2;
      if (s1->requires_grad) s1->g().data[0] += g * (-2.0f * w1 * l_me->val.data[0] + 1.0f);
      if (s2->requires_grad) s2->g().data[0] += g * (-2.0f * w2 * l_au->val.data[0] + 1.0f);
    });
  }
  return o;
}

}  // namespace ops

// Trainable log-sigma parameters of the uncertainty loss.
struct UncertaintyParams {
  NodePtr s1;
  NodePtr s2;

  UncertaintyParams()
      : s1(make_node(Tensor::scalar(0.0f), true)), s2(make_node(Tensor::scalar(0.0f), true)) {}

  double sigma1() const { return std::exp(static_cast<double>(s1->val.data[0])); }
  double sigma2() const { return std::exp(static_cast<double>(s2->val.data[0])); }
};

}  // namespace famnet
