#pragma once

#include <filesystem>
#include <fstream>

#include "famnet/checkpoint.hpp"
#include "famnet/config.hpp"
#include "famnet/metrics.hpp"
#include "famnet/optimizer.hpp"
#include "famnet/preprocess.hpp"

namespace famnet {

inline bool& verbose_logging() {
  static bool v = true;
  return v;
}

inline void logf(const char* fmt, ...) {
  if (!verbose_logging()) return;
  va_list args;
  va_start(args, fmt);
  std::vprintf(fmt, args);
  va_end(args);
  std::fflush(stdout);
}

// Final-performance rule: discard one occurrence of the maximum and return
// the maximum of the remainder (ties at the top discard a single occurrence).
inline int select_final_index(const std::vector<double>& values) {
  FAMNET_CHECK(values.size() >= 2, "select_final: need at least 2 values, got %zu", values.size());
  size_t best = 0;
  for (size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  int sel = -1;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i == best) continue;
    if (sel < 0 || values[i] > values[static_cast<size_t>(sel)]) sel = static_cast<int>(i);
  }
  return sel;
}

inline double select_final(const std::vector<double>& values) {
  return values[static_cast<size_t>(select_final_index(values))];
}

// Per-AU loss weights from the training fold only. "uniform" is all-ones;
// "inverse_frequency" up-weights rare AUs: w_a = n_train / (2 * count_a),
// clamped to [0.25, 10].
inline Tensor compute_au_weights(const DatasetCache& data, const std::vector<int>& train_idx,
                                 const std::string& mode) {
  const int A = static_cast<int>(data.manifest().au_vocabulary.size());
  Tensor w = Tensor::full({A}, 1.0f);
  if (mode == "uniform") return w;
  FAMNET_CHECK(mode == "inverse_frequency", "unknown au_weight_mode '%s'", mode.c_str());
  std::vector<int64_t> counts(static_cast<size_t>(A), 0);
  for (int i : train_idx) {
    const auto& bits = data.samples()[static_cast<size_t>(i)].aus.bits;
    for (int a = 0; a < A; ++a) counts[static_cast<size_t>(a)] += bits[static_cast<size_t>(a)];
  }
  for (int a = 0; a < A; ++a) {
    const double n = static_cast<double>(train_idx.size());
    const double c = static_cast<double>(std::max<int64_t>(1, counts[static_cast<size_t>(a)]));
    w.data[static_cast<size_t>(a)] = static_cast<float>(std::clamp(n / (2.0 * c), 0.25, 10.0));
  }
  return w;
}

// One training unit: a sample plus the frame it contributes (2D branch), or
// the whole clip (frame = -1, 3D branch).
struct TrainUnit {
  int sample = 0;
  int frame = -1;
};

namespace detail {

inline ModelConfig model_config_for(const TrainConfig& cfg, int n_au, uint64_t init_seed) {
  ModelConfig mc;
  mc.is3d = cfg.branch == Branch::ThreeD;
  mc.width = cfg.width;
  mc.n_au = n_au;
  mc.use_attention = cfg.use_attention;
  mc.clip_depth = cfg.clip_depth;
  mc.init_seed = init_seed;
  return mc;
}

inline std::vector<TrainUnit> make_train_units(const DatasetCache& data,
                                               const std::vector<int>& train_idx,
                                               const TrainConfig& cfg) {
  std::vector<TrainUnit> units;
  for (int i : train_idx) {
    const LoadedSample& s = data.samples()[static_cast<size_t>(i)];
    if (cfg.branch == Branch::ThreeD) {
      units.push_back({i, -1});
    } else if (cfg.apex_expand && s.n_frames() >= 7) {
      for (int f : expand_apex_neighbors(s.apex_index, s.n_frames())) units.push_back({i, f});
    } else {
      units.push_back({i, s.apex_index});
    }
  }
  return units;
}

// Batched input tensor for a span of units. Per-unit augmentation seeds
// depend only on (config seed, epoch, sample, frame), so batch order and
// parallelism do not affect the content.
inline Tensor build_batch(const DatasetCache& data, const std::vector<TrainUnit>& units,
                          size_t lo, size_t hi, const TrainConfig& cfg, bool training,
                          uint64_t fold_seed, int epoch) {
  const int B = static_cast<int>(hi - lo);
  AugmentPolicy policy;
  policy.enabled = cfg.augment;
  policy.rng_seed = fold_seed;
  const bool is3d = cfg.branch == Branch::ThreeD;
  Tensor batch = is3d ? Tensor({B, 3, kInputSize, kInputSize, cfg.clip_depth})
                      : Tensor({B, 3, kInputSize, kInputSize});
  const int64_t stride = batch.numel() / B;
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < B; ++b) {
    const TrainUnit& u = units[lo + static_cast<size_t>(b)];
    const LoadedSample& s = data.samples()[static_cast<size_t>(u.sample)];
    const uint64_t seed =
        Rng::derive(fold_seed, {static_cast<uint64_t>(epoch), static_cast<uint64_t>(u.sample),
                                static_cast<uint64_t>(u.frame + 1)});
    Tensor t = is3d ? make_clip_input(s, cfg.clip_depth, policy, training, seed)
                    : make_frame_input(s, u.frame, policy, training, seed);
    std::copy(t.data.begin(), t.data.end(), batch.data.begin() + b * stride);
  }
  return batch;
}

inline Tensor one_hot_targets(const DatasetCache& data, const std::vector<TrainUnit>& units,
                              size_t lo, size_t hi) {
  const int B = static_cast<int>(hi - lo);
  Tensor t({B, kNumClasses});
  for (int b = 0; b < B; ++b) {
    const auto& s = data.samples()[static_cast<size_t>(units[lo + static_cast<size_t>(b)].sample)];
    t.data[static_cast<size_t>(b) * kNumClasses + static_cast<int>(s.label)] = 1.0f;
  }
  return t;
}

inline Tensor au_targets(const DatasetCache& data, const std::vector<TrainUnit>& units, size_t lo,
                         size_t hi, int n_au) {
  const int B = static_cast<int>(hi - lo);
  Tensor t({B, n_au});
  for (int b = 0; b < B; ++b) {
    const auto& bits =
        data.samples()[static_cast<size_t>(units[lo + static_cast<size_t>(b)].sample)].aus.bits;
    for (int a = 0; a < n_au; ++a)
      t.data[static_cast<size_t>(b) * n_au + a] = static_cast<float>(bits[static_cast<size_t>(a)]);
  }
  return t;
}

}  // namespace detail

// MER logits of the given samples under eval conditions (center crop, no
// augmentation, batch-norm running statistics).
inline std::vector<std::vector<float>> predict_mer_logits(BranchModel& model,
                                                          const DatasetCache& data,
                                                          const std::vector<int>& idx,
                                                          int batch_size) {
  const bool is3d = model.config().is3d;
  TrainConfig ecfg;
  ecfg.branch = is3d ? Branch::ThreeD : Branch::TwoD;
  ecfg.clip_depth = model.config().clip_depth;
  ecfg.augment = false;
  std::vector<TrainUnit> units;
  for (int i : idx)
    units.push_back({i, is3d ? -1 : data.samples()[static_cast<size_t>(i)].apex_index});
  std::vector<std::vector<float>> out;
  Tape tape;
  NoGradGuard ng(tape);
  for (size_t lo = 0; lo < units.size(); lo += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(units.size(), lo + static_cast<size_t>(batch_size));
    Tensor batch = detail::build_batch(data, units, lo, hi, ecfg, false, 0, 0);
    NodePtr x = tape.make(std::move(batch), false);
    ScoreVector sv = model.forward(tape, x, false, false);
    const int B = static_cast<int>(hi - lo);
    for (int b = 0; b < B; ++b) {
      std::vector<float> row(static_cast<size_t>(kNumClasses));
      for (int c = 0; c < kNumClasses; ++c)
        row[static_cast<size_t>(c)] = sv.mer_logits->val.data[static_cast<size_t>(b) * kNumClasses + c];
      out.push_back(std::move(row));
    }
    tape.clear();
  }
  return out;
}

inline Confusion confusion_from_logits(const DatasetCache& data, const std::vector<int>& idx,
                                       const std::vector<std::vector<float>>& logits) {
  FAMNET_CHECK(idx.size() == logits.size(), "confusion_from_logits: size mismatch");
  Confusion conf(kNumClasses);
  for (size_t i = 0; i < idx.size(); ++i)
    conf.add(static_cast<int>(data.samples()[static_cast<size_t>(idx[i])].label),
             argmax_class(logits[i]));
  return conf;
}

inline Confusion evaluate_branch(BranchModel& model, const DatasetCache& data,
                                 const std::vector<int>& idx, int batch_size) {
  return confusion_from_logits(data, idx, predict_mer_logits(model, data, idx, batch_size));
}

struct FoldResult {
  std::string subject;
  std::vector<double> uar_trace, uf1_trace;
  std::vector<double> lme_trace, lau_trace;
  int selected_epoch = -1;
  double selected_uar = 0.0, selected_uf1 = 0.0;
  Confusion selected_confusion{kNumClasses};
  std::string ckpt_path;
};

inline nlohmann::json fold_result_to_json(const FoldResult& r) {
  return nlohmann::json{{"subject", r.subject},
                        {"uar_trace", r.uar_trace},
                        {"uf1_trace", r.uf1_trace},
                        {"lme_trace", r.lme_trace},
                        {"lau_trace", r.lau_trace},
                        {"selected_epoch", r.selected_epoch},
                        {"selected_uar", r.selected_uar},
                        {"selected_uf1", r.selected_uf1},
                        {"selected_confusion", detail::confusion_json(r.selected_confusion)},
                        {"ckpt", r.ckpt_path}};
}

inline FoldResult fold_result_from_json(const nlohmann::json& j) {
  FoldResult r;
  r.subject = j.at("subject").get<std::string>();
  r.uar_trace = j.at("uar_trace").get<std::vector<double>>();
  r.uf1_trace = j.at("uf1_trace").get<std::vector<double>>();
  r.lme_trace = j.at("lme_trace").get<std::vector<double>>();
  r.lau_trace = j.at("lau_trace").get<std::vector<double>>();
  r.selected_epoch = j.at("selected_epoch").get<int>();
  r.selected_uar = j.at("selected_uar").get<double>();
  r.selected_uf1 = j.at("selected_uf1").get<double>();
  const auto& cj = j.at("selected_confusion");
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = 0; b < kNumClasses; ++b)
      r.selected_confusion.at(a, b) = cj.at(static_cast<size_t>(a)).at(static_cast<size_t>(b)).get<int64_t>();
  r.ckpt_path = j.at("ckpt").get<std::string>();
  return r;
}

// Trains one LOSO fold of one branch and writes its artifacts
// (ckpt_selected.bin, trace.json) under fold_dir. The checkpoint holds the
// parameters of the epoch picked by the second-highest rule on the UAR
// trace, so re-evaluating it reproduces the recorded metrics.
inline FoldResult run_fold(const TrainConfig& cfg, const DatasetCache& data, const Fold& fold,
                           const std::string& fold_dir) {
  cfg.validate();
  FAMNET_CHECK(cfg.branch != Branch::Fused, "run_fold: the fused branch is evaluation-only");
  namespace fs = std::filesystem;
  fs::create_directories(fold_dir);

  const uint64_t fold_seed = Rng::derive(cfg.seed, {fnv1a64(fold.test_subject)});
  const int n_au = static_cast<int>(data.manifest().au_vocabulary.size());
  auto model = make_branch_model(detail::model_config_for(cfg, n_au, fold_seed));

  const std::vector<int> train_idx = data.indices_of_subjects(fold.train_subjects);
  const std::vector<int> test_idx = data.indices_of_subject(fold.test_subject);
  FAMNET_CHECK(!train_idx.empty() && !test_idx.empty(),
               "run_fold: fold '%s' has empty train or test split", fold.test_subject.c_str());
  const Tensor au_weights = compute_au_weights(data, train_idx, cfg.au_weight_mode);
  std::vector<TrainUnit> units = detail::make_train_units(data, train_idx, cfg);

  // Optimized parameters: dual mode trains everything including the
  // uncertainty scalars; single mode leaves the FAUD stack, FAUD head and
  // loss parameters untouched.
  ParamMap pm;
  BufferMap bm;
  model->collect(pm, bm);
  std::vector<NodePtr> opt_params;
  for (const auto& [name, p] : pm.items) {
    if (cfg.task_mode == TaskMode::Single &&
        (name.rfind("attn.faud.", 0) == 0 || name.rfind("head.faud.", 0) == 0 ||
         name.rfind("loss.", 0) == 0))
      continue;
    opt_params.push_back(p);
  }
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  Adam adam(opt_params, acfg);

  struct Snapshot {
    int epoch = -1;
    double uar = -1.0, uf1 = 0.0;
    Confusion conf{kNumClasses};
    std::vector<Tensor> params, buffers;
  };
  auto take_snapshot = [&](int epoch, double uar, double uf1, const Confusion& conf) {
    Snapshot s;
    s.epoch = epoch;
    s.uar = uar;
    s.uf1 = uf1;
    s.conf = conf;
    for (const auto& [name, p] : pm.items) s.params.push_back(p->val);
    for (const auto& [name, b] : bm.items) s.buffers.push_back(*b);
    return s;
  };
  auto better = [](const Snapshot& a, const Snapshot& b) {
    return a.uar > b.uar || (a.uar == b.uar && a.epoch >= 0 && (b.epoch < 0 || a.epoch < b.epoch));
  };
  Snapshot best, second;

  FoldResult result;
  result.subject = fold.test_subject;
  const bool dual = cfg.task_mode == TaskMode::Dual;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.lr, cfg.lr_decay, epoch);
    adam.set_lr(lr);
    Rng shuffle_rng(Rng::derive(fold_seed, {0x73687566ULL, static_cast<uint64_t>(epoch)}));
    shuffle_rng.shuffle(units);

    double sum_lme = 0.0, sum_lau = 0.0;
    int n_batches = 0;
    for (size_t lo = 0; lo < units.size(); lo += static_cast<size_t>(cfg.batch_size)) {
      const size_t hi = std::min(units.size(), lo + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      Tensor batch = detail::build_batch(data, units, lo, hi, cfg, true, fold_seed, epoch);
      NodePtr x = tape.make(std::move(batch), false);
      ScoreVector sv = model->forward(tape, x, true, dual);
      NodePtr probs = ops::softmax_rows(tape, sv.mer_logits);
      NodePtr l_me = ops::loss_me(tape, probs, detail::one_hot_targets(data, units, lo, hi));
      NodePtr total = l_me;
      NodePtr l_au;
      if (dual) {
        NodePtr au_probs = ops::sigmoid(tape, sv.au_logits);
        l_au = ops::loss_au(tape, au_probs, detail::au_targets(data, units, lo, hi, n_au),
                            au_weights);
        total = ops::uncertainty_combine(tape, l_me, l_au, model->uncertainty().s1,
                                         model->uncertainty().s2);
      }
      FAMNET_CHECK(std::isfinite(total->val.item()),
                   "run_fold: fold '%s' diverged at epoch %d (non-finite loss)",
                   fold.test_subject.c_str(), epoch);
      sum_lme += l_me->val.item();
      if (l_au) sum_lau += l_au->val.item();
      ++n_batches;
      adam.zero_grad();
      tape.backward(total);
      adam.step();
      tape.clear();
    }
    result.lme_trace.push_back(sum_lme / std::max(1, n_batches));
    result.lau_trace.push_back(dual ? sum_lau / std::max(1, n_batches) : 0.0);

    // Per-epoch held-out evaluation drives the second-highest selection rule.
    Confusion conf = evaluate_branch(*model, data, test_idx, cfg.batch_size);
    const double uar = compute_uar(conf).value;
    const double uf1 = compute_uf1(conf).value;
    result.uar_trace.push_back(uar);
    result.uf1_trace.push_back(uf1);

    Snapshot snap = take_snapshot(epoch, uar, uf1, conf);
    if (better(snap, best)) {
      second = std::move(best);
      best = std::move(snap);
    } else if (better(snap, second)) {
      second = std::move(snap);
    }

    if (dual) {
      logf("[fold %s] epoch %d/%d lr=%.3e L_ME=%.4f L_AU=%.4f sigma1=%.3f sigma2=%.3f "
           "test UAR=%.4f UF1=%.4f\n",
           fold.test_subject.c_str(), epoch + 1, cfg.epochs, lr, result.lme_trace.back(),
           result.lau_trace.back(), model->uncertainty().sigma1(), model->uncertainty().sigma2(),
           uar, uf1);
    } else {
      logf("[fold %s] epoch %d/%d lr=%.3e L_ME=%.4f test UAR=%.4f UF1=%.4f\n",
           fold.test_subject.c_str(), epoch + 1, cfg.epochs, lr, result.lme_trace.back(), uar,
           uf1);
    }
  }

  // Restore the selected epoch (second-highest UAR) before checkpointing.
  if (cfg.epochs >= 2) {
    const Snapshot& sel = second;
    result.selected_epoch = sel.epoch;
    result.selected_uar = sel.uar;
    result.selected_uf1 = sel.uf1;
    result.selected_confusion = sel.conf;
    size_t i = 0;
    for (const auto& [name, p] : pm.items) p->val = sel.params[i++];
    i = 0;
    for (const auto& [name, b] : bm.items) *b = sel.buffers[i++];
    FAMNET_CHECK(result.selected_epoch == select_final_index(result.uar_trace),
                 "run_fold: snapshot selection disagrees with select_final");
  } else if (cfg.epochs == 1) {
    result.selected_epoch = 0;
    result.selected_uar = result.uar_trace[0];
    result.selected_uf1 = result.uf1_trace[0];
    result.selected_confusion = best.conf;
  }

  result.ckpt_path = (fs::path(fold_dir) / "ckpt_selected.bin").string();
  save_checkpoint(result.ckpt_path, *model);
  {
    std::ofstream f((fs::path(fold_dir) / "trace.json").string());
    FAMNET_CHECK(f.good(), "run_fold: cannot write trace.json under '%s'", fold_dir.c_str());
    f << fold_result_to_json(result).dump(2) << "\n";
  }
  return result;
}

inline MetricsReport report_from_fold_results(const DatasetCache& data,
                                              const std::vector<FoldResult>& results,
                                              const std::string& hash) {
  MetricsReport report;
  report.dataset_id = data.manifest().dataset_id;
  report.config_hash = hash;
  for (const auto& r : results) {
    FoldMetrics fm;
    fm.subject = r.subject;
    fm.selected_epoch = r.selected_epoch;
    fm.uar = r.selected_uar;
    fm.uf1 = r.selected_uf1;
    fm.confusion = r.selected_confusion;
    fm.uar_trace = r.uar_trace;
    fm.uf1_trace = r.uf1_trace;
    report.folds.push_back(std::move(fm));
  }
  report.finalize();
  return report;
}

// Sequential LOSO over all subjects: per-fold training, second-highest
// selection, pooled confusion aggregation, report emission.
inline MetricsReport run_loso(const TrainConfig& cfg, const DatasetCache& data,
                              const std::string& out_dir) {
  cfg.validate();
  FAMNET_CHECK(cfg.epochs >= 2, "run_loso: need at least 2 epochs for the selection rule");
  const auto folds = loso_folds(data.manifest());
  std::vector<FoldResult> results;
  for (const auto& fold : folds) {
    const std::string fold_dir =
        (std::filesystem::path(out_dir) / ("fold_" + fold.test_subject)).string();
    results.push_back(run_fold(cfg, data, fold, fold_dir));
  }
  MetricsReport report =
      report_from_fold_results(data, results, config_hash(train_config_to_json(cfg)));
  emit_report(report, out_dir);
  return report;
}

// Rebuilds a report from fold artifacts on disk (used after parallel fold
// execution and by the eval command).
inline MetricsReport aggregate_run_dir(const DatasetCache& data, const std::string& run_dir,
                                       const std::string& hash) {
  std::vector<FoldResult> results;
  for (const auto& fold : loso_folds(data.manifest())) {
    const auto p = std::filesystem::path(run_dir) / ("fold_" + fold.test_subject) / "trace.json";
    FAMNET_CHECK(std::filesystem::exists(p), "aggregate: missing fold artifact '%s'",
                 p.string().c_str());
    std::ifstream f(p.string());
    results.push_back(fold_result_from_json(nlohmann::json::parse(f)));
  }
  MetricsReport report = report_from_fold_results(data, results, hash);
  emit_report(report, run_dir);
  return report;
}

inline std::string fold_ckpt_path(const std::string& run_dir, const std::string& subject) {
  return (std::filesystem::path(run_dir) / ("fold_" + subject) / "ckpt_selected.bin").string();
}

// Re-evaluates a finished LOSO run from its per-fold checkpoints.
inline MetricsReport reeval_run(const DatasetCache& data, const std::string& run_dir,
                                const std::string& out_dir, int batch_size) {
  std::vector<FoldResult> results;
  for (const auto& fold : loso_folds(data.manifest())) {
    const std::string ckpt = fold_ckpt_path(run_dir, fold.test_subject);
    FAMNET_CHECK(std::filesystem::exists(ckpt), "eval: missing checkpoint '%s'", ckpt.c_str());
    auto model = load_model(ckpt);
    FoldResult r;
    r.subject = fold.test_subject;
    r.selected_confusion =
        evaluate_branch(*model, data, data.indices_of_subject(fold.test_subject), batch_size);
    r.selected_uar = compute_uar(r.selected_confusion).value;
    r.selected_uf1 = compute_uf1(r.selected_confusion).value;
    r.ckpt_path = ckpt;
    results.push_back(std::move(r));
  }
  MetricsReport report = report_from_fold_results(data, results, "reeval");
  emit_report(report, out_dir);
  return report;
}

// FAMNet evaluation: per fold, loads both branch checkpoints, averages the
// two MER score vectors and classifies the held-out subject.
inline MetricsReport eval_fused_runs(const DatasetCache& data, const std::string& run2d,
                                     const std::string& run3d, const std::string& out_dir,
                                     int batch_size = 8) {
  std::vector<FoldResult> results;
  for (const auto& fold : loso_folds(data.manifest())) {
    const std::string ckpt2d = fold_ckpt_path(run2d, fold.test_subject);
    const std::string ckpt3d = fold_ckpt_path(run3d, fold.test_subject);
    FAMNET_CHECK(std::filesystem::exists(ckpt2d),
                 "fused eval: missing 2D checkpoint '%s' for fold '%s'", ckpt2d.c_str(),
                 fold.test_subject.c_str());
    FAMNET_CHECK(std::filesystem::exists(ckpt3d),
                 "fused eval: missing 3D checkpoint '%s' for fold '%s'", ckpt3d.c_str(),
                 fold.test_subject.c_str());
    auto m2d = load_model(ckpt2d);
    auto m3d = load_model(ckpt3d);
    FAMNET_CHECK(!m2d->config().is3d && m3d->config().is3d,
                 "fused eval: checkpoint branches are swapped");
    const std::vector<int> idx = data.indices_of_subject(fold.test_subject);
    const auto l2d = predict_mer_logits(*m2d, data, idx, batch_size);
    const auto l3d = predict_mer_logits(*m3d, data, idx, batch_size);
    std::vector<std::vector<float>> fused;
    for (size_t i = 0; i < idx.size(); ++i) fused.push_back(late_fuse(l2d[i], l3d[i]));
    FoldResult r;
    r.subject = fold.test_subject;
    r.selected_confusion = confusion_from_logits(data, idx, fused);
    r.selected_uar = compute_uar(r.selected_confusion).value;
    r.selected_uf1 = compute_uf1(r.selected_confusion).value;
    results.push_back(std::move(r));
  }
  MetricsReport report = report_from_fold_results(data, results, "fused");
  emit_report(report, out_dir);
  return report;
}

// --- ablation ----------------------------------------------------------------

struct AblationRow {
  std::string name;
  double uar = 0.0, uf1 = 0.0;
};

struct AblationSpec {
  TrainConfig base2d;  // taken as Dual+HA(2D); other rows derive from it
  TrainConfig base3d;
  std::vector<std::string> rows = {"baseline", "single2d", "dual2d",
                                   "single3d", "dual3d",   "famnet"};
};

inline TrainConfig ablation_config(const AblationSpec& spec, const std::string& row) {
  TrainConfig c;
  if (row == "baseline") {
    c = spec.base2d;
    c.task_mode = TaskMode::Single;
    c.use_attention = false;
  } else if (row == "single2d") {
    c = spec.base2d;
    c.task_mode = TaskMode::Single;
  } else if (row == "dual2d") {
    c = spec.base2d;
    c.task_mode = TaskMode::Dual;
  } else if (row == "single3d") {
    c = spec.base3d;
    c.task_mode = TaskMode::Single;
  } else if (row == "dual3d") {
    c = spec.base3d;
    c.task_mode = TaskMode::Dual;
  } else {
    throw Error(strformat("ablation: unknown row '%s'", row.c_str()));
  }
  c.branch = row == "single3d" || row == "dual3d" ? Branch::ThreeD : Branch::TwoD;
  c.use_attention = row != "baseline";
  return c;
}

inline const char* ablation_display_name(const std::string& row) {
  if (row == "baseline") return "Baseline";
  if (row == "single2d") return "Single+HA(2D)";
  if (row == "dual2d") return "Dual+HA(2D)";
  if (row == "single3d") return "Single+HA(3D)";
  if (row == "dual3d") return "Dual+HA(3D)";
  if (row == "famnet") return "FAMNet";
  return row.c_str();
}

// Runs the requested ablation rows (each a full LOSO) plus the fused FAMNet
// row, and writes ablation.json and a comparison table.
inline std::vector<AblationRow> run_ablation(const AblationSpec& spec, const DatasetCache& data,
                                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<AblationRow> table;
  for (const auto& row : spec.rows) {
    const std::string row_dir = (fs::path(out_dir) / row).string();
    MetricsReport rep;
    if (row == "famnet") {
      const std::string d2 = (fs::path(out_dir) / "dual2d").string();
      const std::string d3 = (fs::path(out_dir) / "dual3d").string();
      FAMNET_CHECK(fs::is_directory(d2), "ablation: FAMNet row requires the dual2d run at '%s'",
                   d2.c_str());
      FAMNET_CHECK(fs::is_directory(d3), "ablation: FAMNet row requires the dual3d run at '%s'",
                   d3.c_str());
      rep = eval_fused_runs(data, d2, d3, row_dir);
    } else {
      logf("[ablation] running %s\n", ablation_display_name(row));
      rep = run_loso(ablation_config(spec, row), data, row_dir);
    }
    table.push_back({row, rep.uar, rep.uf1});
  }
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : table)
    j.push_back({{"row", r.name},
                 {"method", ablation_display_name(r.name)},
                 {"uar", r.uar},
                 {"uf1", r.uf1}});
  std::ofstream f((fs::path(out_dir) / "ablation.json").string());
  f << j.dump(2) << "\n";
  logf("\n%-16s %8s %8s\n", "method", "UAR", "UF1");
  for (const auto& r : table)
    logf("%-16s %8.4f %8.4f\n", ablation_display_name(r.name), r.uar, r.uf1);
  return table;
}

}  // namespace famnet
