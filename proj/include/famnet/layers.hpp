#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "famnet/ops.hpp"
#include "famnet/rng.hpp"

namespace famnet {

// Named views of a model's trainable parameters and persistent buffers
// (batch-norm running statistics). Collection order follows construction
// order and is deterministic.
struct ParamMap {
  std::vector<std::pair<std::string, NodePtr>> items;
  void add(std::string name, NodePtr p) { items.emplace_back(std::move(name), std::move(p)); }
  NodePtr find(const std::string& name) const {
    for (const auto& [n, p] : items)
      if (n == name) return p;
    return nullptr;
  }
  int64_t count() const {
    int64_t c = 0;
    for (const auto& [n, p] : items) c += p->val.numel();
    return c;
  }
};

struct BufferMap {
  std::vector<std::pair<std::string, Tensor*>> items;
  void add(std::string name, Tensor* t) { items.emplace_back(std::move(name), t); }
};

namespace init {

// Kaiming-normal fan-in initialization for convolution weights.
inline void kaiming_normal(Tensor& w, int64_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (float& v : w.data) v = static_cast<float>(rng.normal(0.0, std));
}

inline void normal_scaled(Tensor& w, int64_t fan_in, Rng& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (float& v : w.data) v = static_cast<float>(rng.normal(0.0, std));
}

}  // namespace init

struct Conv2dLayer {
  NodePtr weight;
  NodePtr bias;  // null for backbone convolutions
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride_, int pad_, bool with_bias, Rng& rng)
      : stride(stride_), pad(pad_) {
    Tensor w({cout, cin, k, k});
    init::kaiming_normal(w, static_cast<int64_t>(cin) * k * k, rng);
    weight = make_node(std::move(w), true);
    if (with_bias) bias = make_node(Tensor::zeros({cout}), true);
  }

  NodePtr forward(Tape& t, const NodePtr& x) const {
    return ops::conv2d(t, x, weight, bias, stride, pad);
  }
  void collect(const std::string& p, ParamMap& pm) const {
    pm.add(p + ".weight", weight);
    if (bias) pm.add(p + ".bias", bias);
  }
};

struct Conv3dLayer {
  NodePtr weight;
  NodePtr bias;
  int sh = 1, sw = 1, sd = 1, ph = 0, pw = 0, pd = 0;

  Conv3dLayer() = default;
  Conv3dLayer(int cin, int cout, int k, int sh_, int sw_, int sd_, int ph_, int pw_, int pd_,
              bool with_bias, Rng& rng)
      : sh(sh_), sw(sw_), sd(sd_), ph(ph_), pw(pw_), pd(pd_) {
    Tensor w({cout, cin, k, k, k});
    init::kaiming_normal(w, static_cast<int64_t>(cin) * k * k * k, rng);
    weight = make_node(std::move(w), true);
    if (with_bias) bias = make_node(Tensor::zeros({cout}), true);
  }

  NodePtr forward(Tape& t, const NodePtr& x) const {
    return ops::conv3d(t, x, weight, bias, sh, sw, sd, ph, pw, pd);
  }
  void collect(const std::string& p, ParamMap& pm) const {
    pm.add(p + ".weight", weight);
    if (bias) pm.add(p + ".bias", bias);
  }
};

struct BatchNormLayer {
  NodePtr gamma, beta;
  Tensor running_mean, running_var;

  BatchNormLayer() = default;
  explicit BatchNormLayer(int channels)
      : gamma(make_node(Tensor::full({channels}, 1.0f), true)),
        beta(make_node(Tensor::zeros({channels}), true)),
        running_mean(Tensor::zeros({channels})),
        running_var(Tensor::full({channels}, 1.0f)) {}

  NodePtr forward(Tape& t, const NodePtr& x, bool training) {
    return ops::batch_norm(t, x, gamma, beta, &running_mean, &running_var, training);
  }
  void collect(const std::string& p, ParamMap& pm, BufferMap& bm) {
    pm.add(p + ".gamma", gamma);
    pm.add(p + ".beta", beta);
    bm.add(p + ".running_mean", &running_mean);
    bm.add(p + ".running_var", &running_var);
  }
};

struct LinearLayer {
  NodePtr weight, bias;

  LinearLayer() = default;
  LinearLayer(int in, int out, Rng& rng) {
    Tensor w({out, in});
    init::normal_scaled(w, in, rng);
    weight = make_node(std::move(w), true);
    bias = make_node(Tensor::zeros({out}), true);
  }

  NodePtr forward(Tape& t, const NodePtr& x) const { return ops::linear(t, x, weight, bias); }
  void collect(const std::string& p, ParamMap& pm) const {
    pm.add(p + ".weight", weight);
    pm.add(p + ".bias", bias);
  }
};

}  // namespace famnet
