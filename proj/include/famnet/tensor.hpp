#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "famnet/common.hpp"

namespace famnet {

// Dense float tensor, row-major, value semantics.
// Layout conventions used across the project:
//   2D feature maps: [N, C, H, W]
//   3D feature maps: [N, C, H, W, D]   (temporal depth innermost)
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
  }
  Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    FAMNET_CHECK(static_cast<int64_t>(data.size()) == numel_of(shape),
                 "tensor data size %zu does not match shape", data.size());
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      FAMNET_CHECK(d >= 0, "negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  float item() const {
    FAMNET_CHECK(numel() == 1, "item() on tensor with %lld elements", static_cast<long long>(numel()));
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      s += std::to_string(shape[i]);
      if (i + 1 < shape.size()) s += ",";
    }
    return s + "]";
  }
};

inline bool all_finite(const Tensor& t) {
  for (float v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace famnet
