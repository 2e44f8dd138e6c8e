#pragma once

#include <memory>
#include <optional>

#include "famnet/attention.hpp"
#include "famnet/losses.hpp"

namespace famnet {

struct ModelConfig {
  bool is3d = false;
  float width = 1.0f;
  int n_au = 12;
  int n_classes = 3;
  bool use_attention = true;
  int clip_depth = 16;  // expected input depth for the 3D branch
  uint64_t init_seed = 1;
};

// Per-task prediction scores for one branch: raw MER logits (softmax gives
// class probabilities) and raw AU logits (sigmoid gives per-AU probabilities).
struct ScoreVector {
  NodePtr mer_logits;  // [N, n_classes]
  NodePtr au_logits;   // [N, n_au]; null when the FAUD pass is skipped
};

// One branch network: shared backbone, two task attention stacks with
// independent parameters, a linear head per task, and the branch's
// uncertainty parameters. In baseline mode the attention stacks are absent
// and both heads read the pooled taps(4,2).
class BranchModel {
 public:
  virtual ~BranchModel() = default;

  // Forward a preprocessed input batch. with_faud=false skips the FAUD
  // stack and head entirely (single-task mode).
  virtual ScoreVector forward(Tape& t, const NodePtr& x, bool training, bool with_faud) = 0;

  // Backbone taps of the last forward (kept for inspection in tests).
  virtual const FeatureTaps& last_taps() const = 0;
  virtual AttentionState run_attention(Tape& t, const FeatureTaps& taps, Task task) = 0;

  virtual void collect(ParamMap& pm, BufferMap& bm) = 0;
  virtual const ModelConfig& config() const = 0;

  UncertaintyParams& uncertainty() { return unc_; }

  ParamMap params() {
    ParamMap pm;
    BufferMap bm;
    collect(pm, bm);
    return pm;
  }
  BufferMap buffers() {
    ParamMap pm;
    BufferMap bm;
    collect(pm, bm);
    return bm;
  }

 protected:
  UncertaintyParams unc_;

  void collect_loss_params(ParamMap& pm) {
    pm.add("loss.s1", unc_.s1);
    pm.add("loss.s2", unc_.s2);
  }
};

namespace detail {

template <typename BackboneT, typename StackT>
class BranchModelImpl final : public BranchModel {
 public:
  explicit BranchModelImpl(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(Rng::derive(cfg.init_seed, {0x6d6f64656cULL}));
    backbone_ = BackboneT(cfg.width, rng);
    if (cfg.use_attention) {
      mer_stack_ = StackT(backbone_.ch, Task::MER, rng);
      faud_stack_ = StackT(backbone_.ch, Task::FAUD, rng);
    }
    mer_head_ = LinearLayer(backbone_.ch[3], cfg.n_classes, rng);
    faud_head_ = LinearLayer(backbone_.ch[3], cfg.n_au, rng);
  }

  ScoreVector forward(Tape& t, const NodePtr& x, bool training, bool with_faud) override {
    taps_ = backbone_.forward(t, x, training);
    ScoreVector out;
    NodePtr f_mer = cfg_.use_attention ? mer_stack_->run_final(t, taps_) : taps_.taps(4, 2);
    out.mer_logits = mer_head_.forward(t, ops::global_avg_pool(t, f_mer));
    if (with_faud) {
      NodePtr f_faud = cfg_.use_attention ? faud_stack_->run_final(t, taps_) : taps_.taps(4, 2);
      out.au_logits = faud_head_.forward(t, ops::global_avg_pool(t, f_faud));
    }
    return out;
  }

  const FeatureTaps& last_taps() const override { return taps_; }

  AttentionState run_attention(Tape& t, const FeatureTaps& taps, Task task) override {
    FAMNET_CHECK(cfg_.use_attention, "model built without attention");
    return task == Task::MER ? mer_stack_->run(t, taps) : faud_stack_->run(t, taps);
  }

  void collect(ParamMap& pm, BufferMap& bm) override {
    backbone_.collect("backbone", pm, bm);
    if (cfg_.use_attention) {
      mer_stack_->collect("attn.mer", pm);
      faud_stack_->collect("attn.faud", pm);
    }
    mer_head_.collect("head.mer", pm);
    faud_head_.collect("head.faud", pm);
    collect_loss_params(pm);
  }

  const ModelConfig& config() const override { return cfg_; }

  BackboneT& backbone() { return backbone_; }
  StackT& mer_stack() { return *mer_stack_; }
  StackT& faud_stack() { return *faud_stack_; }

 private:
  ModelConfig cfg_;
  BackboneT backbone_;
  std::optional<StackT> mer_stack_, faud_stack_;
  LinearLayer mer_head_, faud_head_;
  FeatureTaps taps_;
};

}  // namespace detail

using AmNet2d = detail::BranchModelImpl<Backbone2d, TaskAttentionStack2d>;
using AmNet3d = detail::BranchModelImpl<Backbone3d, TaskAttentionStack3d>;

inline std::unique_ptr<BranchModel> make_branch_model(const ModelConfig& cfg) {
  if (cfg.is3d) return std::make_unique<AmNet3d>(cfg);
  return std::make_unique<AmNet2d>(cfg);
}

}  // namespace famnet
