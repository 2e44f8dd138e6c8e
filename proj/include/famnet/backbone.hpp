#pragma once

#include <array>
#include <cmath>

#include "famnet/layers.hpp"

namespace famnet {

// The eight intermediate block outputs of one branch: taps(i,j) is the
// output of basic block j of stage i (1-based, i in 1..4, j in 1..2).
struct FeatureTaps {
  std::array<std::array<NodePtr, 2>, 4> t;

  NodePtr& taps(int i, int j) {
    FAMNET_CHECK(i >= 1 && i <= 4 && j >= 1 && j <= 2, "taps index (%d,%d) out of range", i, j);
    return t[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)];
  }
  const NodePtr& taps(int i, int j) const {
    FAMNET_CHECK(i >= 1 && i <= 4 && j >= 1 && j <= 2, "taps index (%d,%d) out of range", i, j);
    return t[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)];
  }
};

// Stage widths of the standard ResNet18 trunk scaled by a width multiplier.
inline std::array<int, 4> stage_channels(float width) {
  FAMNET_CHECK(width > 0.0f, "width multiplier must be positive");
  std::array<int, 4> base{64, 128, 256, 512};
  std::array<int, 4> out{};
  for (size_t i = 0; i < 4; ++i)
    out[i] = std::max(1, static_cast<int>(std::lround(base[i] * width)));
  return out;
}

struct BasicBlock2d {
  Conv2dLayer conv1, conv2;
  BatchNormLayer bn1, bn2;
  bool has_down = false;
  Conv2dLayer down_conv;
  BatchNormLayer down_bn;

  BasicBlock2d() = default;
  BasicBlock2d(int cin, int cout, int stride, Rng& rng)
      : conv1(cin, cout, 3, stride, 1, false, rng),
        conv2(cout, cout, 3, 1, 1, false, rng),
        bn1(cout),
        bn2(cout) {
    if (stride != 1 || cin != cout) {
      has_down = true;
      down_conv = Conv2dLayer(cin, cout, 1, stride, 0, false, rng);
      down_bn = BatchNormLayer(cout);
    }
  }

  NodePtr forward(Tape& t, const NodePtr& x, bool training) {
    NodePtr y = ops::relu(t, bn1.forward(t, conv1.forward(t, x), training));
    y = bn2.forward(t, conv2.forward(t, y), training);
    NodePtr skip = has_down ? down_bn.forward(t, down_conv.forward(t, x), training) : x;
    return ops::relu(t, ops::add(t, y, skip));
  }

  void collect(const std::string& p, ParamMap& pm, BufferMap& bm) {
    conv1.collect(p + ".conv1", pm);
    bn1.collect(p + ".bn1", pm, bm);
    conv2.collect(p + ".conv2", pm);
    bn2.collect(p + ".bn2", pm, bm);
    if (has_down) {
      down_conv.collect(p + ".down.conv", pm);
      down_bn.collect(p + ".down.bn", pm, bm);
    }
  }
};

// ResNet18 trunk (classifier head removed): 7x7/2 stem with 3x3/2 max-pool,
// then four stages of two basic blocks. Exposes all eight block outputs.
struct Backbone2d {
  std::array<int, 4> ch;
  Conv2dLayer stem_conv;
  BatchNormLayer stem_bn;
  std::array<std::array<BasicBlock2d, 2>, 4> blocks;

  Backbone2d() = default;
  Backbone2d(float width, Rng& rng) : ch(stage_channels(width)) {
    stem_conv = Conv2dLayer(3, ch[0], 7, 2, 3, false, rng);
    stem_bn = BatchNormLayer(ch[0]);
    int cin = ch[0];
    for (int s = 0; s < 4; ++s) {
      const int stride = s == 0 ? 1 : 2;
      blocks[static_cast<size_t>(s)][0] = BasicBlock2d(cin, ch[static_cast<size_t>(s)], stride, rng);
      blocks[static_cast<size_t>(s)][1] =
          BasicBlock2d(ch[static_cast<size_t>(s)], ch[static_cast<size_t>(s)], 1, rng);
      cin = ch[static_cast<size_t>(s)];
    }
  }

  FeatureTaps forward(Tape& t, const NodePtr& x, bool training) {
    FAMNET_CHECK(x->val.ndim() == 4 && x->val.dim(1) == 3,
                 "backbone2d: input must be [N,3,H,W], got %s", x->val.shape_str().c_str());
    FAMNET_CHECK(x->val.dim(2) % 32 == 0 && x->val.dim(3) % 32 == 0 && x->val.dim(2) >= 32,
                 "backbone2d: H and W must be multiples of 32, got %s",
                 x->val.shape_str().c_str());
    NodePtr y = ops::relu(t, stem_bn.forward(t, stem_conv.forward(t, x), training));
    y = ops::max_pool(t, y, 3, 2, 1);
    FeatureTaps taps;
    for (int s = 0; s < 4; ++s) {
      y = blocks[static_cast<size_t>(s)][0].forward(t, y, training);
      taps.taps(s + 1, 1) = y;
      y = blocks[static_cast<size_t>(s)][1].forward(t, y, training);
      taps.taps(s + 1, 2) = y;
    }
    return taps;
  }

  void collect(const std::string& p, ParamMap& pm, BufferMap& bm) {
    stem_conv.collect(p + ".stem.conv", pm);
    stem_bn.collect(p + ".stem.bn", pm, bm);
    for (int s = 0; s < 4; ++s)
      for (int b = 0; b < 2; ++b)
        blocks[static_cast<size_t>(s)][static_cast<size_t>(b)].collect(
            p + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1), pm, bm);
  }
};

struct BasicBlock3d {
  Conv3dLayer conv1, conv2;
  BatchNormLayer bn1, bn2;
  bool has_down = false;
  Conv3dLayer down_conv;
  BatchNormLayer down_bn;

  BasicBlock3d() = default;
  // stride applies to all three axes (1 or 2); 3x3x3 kernels throughout.
  BasicBlock3d(int cin, int cout, int stride, Rng& rng)
      : conv1(cin, cout, 3, stride, stride, stride, 1, 1, 1, false, rng),
        conv2(cout, cout, 3, 1, 1, 1, 1, 1, 1, false, rng),
        bn1(cout),
        bn2(cout) {
    if (stride != 1 || cin != cout) {
      has_down = true;
      down_conv = Conv3dLayer(cin, cout, 1, stride, stride, stride, 0, 0, 0, false, rng);
      down_bn = BatchNormLayer(cout);
    }
  }

  NodePtr forward(Tape& t, const NodePtr& x, bool training) {
    NodePtr y = ops::relu(t, bn1.forward(t, conv1.forward(t, x), training));
    y = bn2.forward(t, conv2.forward(t, y), training);
    NodePtr skip = has_down ? down_bn.forward(t, down_conv.forward(t, x), training) : x;
    return ops::relu(t, ops::add(t, y, skip));
  }

  void collect(const std::string& p, ParamMap& pm, BufferMap& bm) {
    conv1.collect(p + ".conv1", pm);
    bn1.collect(p + ".bn1", pm, bm);
    conv2.collect(p + ".conv2", pm);
    bn2.collect(p + ".bn2", pm, bm);
    if (has_down) {
      down_conv.collect(p + ".down.conv", pm);
      down_bn.collect(p + ".down.bn", pm, bm);
    }
  }
};

// 3D ResNet18 trunk. The stem keeps temporal resolution (7x7x7 kernel,
// spatial stride 2, temporal stride 1, spatial-only max-pool); stages 2-4
// halve depth along with the spatial dims, so depth d yields d/8 at stage 4.
// Depth must be a positive multiple of 8.
struct Backbone3d {
  std::array<int, 4> ch;
  Conv3dLayer stem_conv;
  BatchNormLayer stem_bn;
  std::array<std::array<BasicBlock3d, 2>, 4> blocks;

  Backbone3d() = default;
  Backbone3d(float width, Rng& rng) : ch(stage_channels(width)) {
    stem_conv = Conv3dLayer(3, ch[0], 7, 2, 2, 1, 3, 3, 3, false, rng);
    stem_bn = BatchNormLayer(ch[0]);
    int cin = ch[0];
    for (int s = 0; s < 4; ++s) {
      const int stride = s == 0 ? 1 : 2;
      blocks[static_cast<size_t>(s)][0] = BasicBlock3d(cin, ch[static_cast<size_t>(s)], stride, rng);
      blocks[static_cast<size_t>(s)][1] =
          BasicBlock3d(ch[static_cast<size_t>(s)], ch[static_cast<size_t>(s)], 1, rng);
      cin = ch[static_cast<size_t>(s)];
    }
  }

  FeatureTaps forward(Tape& t, const NodePtr& x, bool training) {
    FAMNET_CHECK(x->val.ndim() == 5 && x->val.dim(1) == 3,
                 "backbone3d: input must be [N,3,H,W,D], got %s", x->val.shape_str().c_str());
    FAMNET_CHECK(x->val.dim(2) % 32 == 0 && x->val.dim(3) % 32 == 0 && x->val.dim(2) >= 32,
                 "backbone3d: H and W must be multiples of 32, got %s",
                 x->val.shape_str().c_str());
    const int d = x->val.dim(4);
    FAMNET_CHECK(d >= 8 && d % 8 == 0, "backbone3d: depth must be a multiple of 8 and >= 8, got %d",
                 d);
    NodePtr y = ops::relu(t, stem_bn.forward(t, stem_conv.forward(t, x), training));
    y = ops::max_pool(t, y, 3, 2, 1, 3, 1, 1);
    FeatureTaps taps;
    for (int s = 0; s < 4; ++s) {
      y = blocks[static_cast<size_t>(s)][0].forward(t, y, training);
      taps.taps(s + 1, 1) = y;
      y = blocks[static_cast<size_t>(s)][1].forward(t, y, training);
      taps.taps(s + 1, 2) = y;
    }
    return taps;
  }

  void collect(const std::string& p, ParamMap& pm, BufferMap& bm) {
    stem_conv.collect(p + ".stem.conv", pm);
    stem_bn.collect(p + ".stem.bn", pm, bm);
    for (int s = 0; s < 4; ++s)
      for (int b = 0; b < 2; ++b)
        blocks[static_cast<size_t>(s)][static_cast<size_t>(b)].collect(
            p + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1), pm, bm);
  }
};

}  // namespace famnet
