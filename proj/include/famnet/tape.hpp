#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "famnet/tensor.hpp"

namespace famnet {

// A value in the autodiff graph. Gradient storage is allocated lazily on
// first accumulation.
struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool has_grad = false;

  Tensor& g() {
    if (!has_grad) {
      grad = Tensor::zeros(val.shape);
      has_grad = true;
    }
    return grad;
  }
  void zero_grad() {
    if (has_grad) std::fill(grad.data.begin(), grad.data.end(), 0.0f);
  }
};

using NodePtr = std::shared_ptr<Node>;

inline NodePtr make_node(Tensor v, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

// Reverse-mode tape. Each op appends a closure that propagates gradients
// from its output to its inputs. clear() releases all retained activations;
// call it once per optimization step.
class Tape {
 public:
  NodePtr make(Tensor v, bool requires_grad) {
    return make_node(std::move(v), requires_grad);
  }

  void record(std::function<void()> fn) {
    if (enabled_) ops_.push_back(std::move(fn));
  }

  bool enabled() const { return enabled_; }
  void set_enabled(bool e) { enabled_ = e; }

  // Seeds d(root)/d(root) = 1 and runs the tape backwards.
  void backward(const NodePtr& root) {
    FAMNET_CHECK(root->val.numel() == 1, "backward root must be scalar, got %s",
                 root->val.shape_str().c_str());
    root->g().data[0] = 1.0f;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() { ops_.clear(); }
  size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  bool enabled_ = true;
};

// RAII guard for forward-only evaluation (skips recording backward closures).
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& t) : tape_(t), prev_(t.enabled()) { tape_.set_enabled(false); }
  ~NoGradGuard() { tape_.set_enabled(prev_); }

 private:
  Tape& tape_;
  bool prev_;
};

}  // namespace famnet
