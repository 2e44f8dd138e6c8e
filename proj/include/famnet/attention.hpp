#pragma once

#include <array>

#include "famnet/backbone.hpp"

namespace famnet {

enum class Task { MER, FAUD };

// Per-stage attention matrices and gated features of one task stack.
struct AttentionState {
  std::array<NodePtr, 4> M;  // M[k-1]: softmax attention matrix of stage k
  std::array<NodePtr, 4> F;  // F[k-1]: taps(k,2) gated by M[k-1]
  Task task = Task::MER;
};

namespace detail {

inline Conv2dLayer make_attn_conv(int cin, int cout, Rng& rng, const Conv2dLayer*) {
  return Conv2dLayer(cin, cout, 1, 1, 0, true, rng);
}
inline Conv3dLayer make_attn_conv(int cin, int cout, Rng& rng, const Conv3dLayer*) {
  return Conv3dLayer(cin, cout, 1, 1, 1, 1, 0, 0, 0, true, rng);
}

}  // namespace detail

// One task-specific attention stack: four chained attention modules over the
// backbone taps. Module 1 maps taps(1,1) through a 1x1 convolution and a
// per-channel softmax over positions; module k >= 2 consumes the channel
// concatenation of the downsampled previous gated feature with taps(k,1).
// The same structure serves the 2D and 3D branches.
template <typename ConvT>
struct TaskAttentionStack {
  std::array<ConvT, 4> convs;
  Task task = Task::MER;

  TaskAttentionStack() = default;
  TaskAttentionStack(const std::array<int, 4>& ch, Task task_, Rng& rng) : task(task_) {
    const ConvT* tag = nullptr;
    convs[0] = detail::make_attn_conv(ch[0], ch[0], rng, tag);
    for (int k = 2; k <= 4; ++k)
      convs[static_cast<size_t>(k - 1)] = detail::make_attn_conv(
          ch[static_cast<size_t>(k - 2)] + ch[static_cast<size_t>(k - 1)],
          ch[static_cast<size_t>(k - 1)], rng, tag);
  }

  // First module: M1 = softmax(Conv1(taps(1,1))), F1 = taps(1,2) * M1.
  std::pair<NodePtr, NodePtr> first(Tape& t, const NodePtr& tap_k1, const NodePtr& tap_k2) const {
    FAMNET_CHECK(tap_k1->val.same_shape(tap_k2->val),
                 "attention: stage-1 taps must share a shape, got %s vs %s",
                 tap_k1->val.shape_str().c_str(), tap_k2->val.shape_str().c_str());
    NodePtr m = ops::softmax_positions(t, convs[0].forward(t, tap_k1));
    return {m, ops::mul(t, tap_k2, m)};
  }

  // Module k in 2..4: concat(pool(F_{k-1}), taps(k,1)) -> conv -> softmax.
  std::pair<NodePtr, NodePtr> step(Tape& t, const NodePtr& f_prev, const NodePtr& tap_k1,
                                   const NodePtr& tap_k2, int k) const {
    FAMNET_CHECK(k >= 2 && k <= 4, "attention: stage index %d out of range", k);
    NodePtr pooled = ops::avg_pool_half(t, f_prev);
    NodePtr m = ops::softmax_positions(
        t, convs[static_cast<size_t>(k - 1)].forward(t, ops::concat_channels(t, pooled, tap_k1)));
    FAMNET_CHECK(m->val.same_shape(tap_k2->val), "attention: M%d shape %s vs tap %s", k,
                 m->val.shape_str().c_str(), tap_k2->val.shape_str().c_str());
    return {m, ops::mul(t, tap_k2, m)};
  }

  AttentionState run(Tape& t, const FeatureTaps& taps) const {
    AttentionState st;
    st.task = task;
    auto [m1, f1] = first(t, taps.taps(1, 1), taps.taps(1, 2));
    st.M[0] = m1;
    st.F[0] = f1;
    for (int k = 2; k <= 4; ++k) {
      auto [mk, fk] = step(t, st.F[static_cast<size_t>(k - 2)], taps.taps(k, 1), taps.taps(k, 2), k);
      st.M[static_cast<size_t>(k - 1)] = mk;
      st.F[static_cast<size_t>(k - 1)] = fk;
    }
    return st;
  }

  // Final gated feature F4 feeding the task head.
  NodePtr run_final(Tape& t, const FeatureTaps& taps) const { return run(t, taps).F[3]; }

  void collect(const std::string& p, ParamMap& pm) const {
    for (int k = 1; k <= 4; ++k)
      convs[static_cast<size_t>(k - 1)].collect(p + ".conv" + std::to_string(k), pm);
  }
};

using TaskAttentionStack2d = TaskAttentionStack<Conv2dLayer>;
using TaskAttentionStack3d = TaskAttentionStack<Conv3dLayer>;

}  // namespace famnet
