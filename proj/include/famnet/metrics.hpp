#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "famnet/image.hpp"
#include "famnet/manifest.hpp"

namespace famnet {

// Row-major C x C confusion matrix, rows = true class, columns = predicted.
struct Confusion {
  int C = kNumClasses;
  std::vector<int64_t> m;

  explicit Confusion(int classes = kNumClasses)
      : C(classes), m(static_cast<size_t>(classes) * classes, 0) {}

  int64_t& at(int true_c, int pred_c) { return m[static_cast<size_t>(true_c) * C + pred_c]; }
  int64_t at(int true_c, int pred_c) const { return m[static_cast<size_t>(true_c) * C + pred_c]; }
  void add(int true_c, int pred_c) {
    FAMNET_CHECK(true_c >= 0 && true_c < C && pred_c >= 0 && pred_c < C,
                 "confusion: class out of range");
    ++at(true_c, pred_c);
  }
  void merge(const Confusion& o) {
    FAMNET_CHECK(C == o.C, "confusion: size mismatch");
    for (size_t i = 0; i < m.size(); ++i) m[i] += o.m[i];
  }
  int64_t total() const {
    int64_t t = 0;
    for (int64_t v : m) t += v;
    return t;
  }
  int64_t tp(int c) const { return at(c, c); }
  int64_t n(int c) const {  // ground-truth count (row sum)
    int64_t t = 0;
    for (int p = 0; p < C; ++p) t += at(c, p);
    return t;
  }
  int64_t fp(int c) const {
    int64_t t = 0;
    for (int r = 0; r < C; ++r)
      if (r != c) t += at(r, c);
    return t;
  }
  int64_t fn(int c) const { return n(c) - tp(c); }
};

// Metric value plus per-class detail. Classes listed in `excluded` did not
// enter the mean (their per-class value is reported as 0).
struct MetricResult {
  double value = 0.0;
  std::vector<double> per_class;
  std::vector<int> excluded;
};

// Unweighted average recall: mean over classes of TP_c / N_c. Classes absent
// from the ground truth are excluded from the mean.
inline MetricResult compute_uar(const Confusion& conf) {
  MetricResult r;
  r.per_class.assign(static_cast<size_t>(conf.C), 0.0);
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < conf.C; ++c) {
    if (conf.n(c) == 0) {
      r.excluded.push_back(c);
      continue;
    }
    const double recall = static_cast<double>(conf.tp(c)) / static_cast<double>(conf.n(c));
    r.per_class[static_cast<size_t>(c)] = recall;
    sum += recall;
    ++used;
  }
  FAMNET_CHECK(used > 0, "compute_uar: no class present in ground truth");
  r.value = sum / used;
  return r;
}

// Unweighted F1: mean over classes of 2TP_c / (2TP_c + FP_c + FN_c). A class
// with TP = FP = FN = 0 gets F1 defined as 0 and is excluded from the mean
// (it is absent from both truth and predictions).
inline MetricResult compute_uf1(const Confusion& conf) {
  MetricResult r;
  r.per_class.assign(static_cast<size_t>(conf.C), 0.0);
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < conf.C; ++c) {
    const int64_t denom = 2 * conf.tp(c) + conf.fp(c) + conf.fn(c);
    if (denom == 0) {
      r.excluded.push_back(c);
      continue;
    }
    const double f1 = 2.0 * static_cast<double>(conf.tp(c)) / static_cast<double>(denom);
    r.per_class[static_cast<size_t>(c)] = f1;
    sum += f1;
    ++used;
  }
  FAMNET_CHECK(used > 0, "compute_uf1: empty confusion matrix");
  r.value = sum / used;
  return r;
}

// Decision-level fusion: elementwise mean of the two branches' MER scores.
inline std::vector<float> late_fuse(const std::vector<float>& o1, const std::vector<float>& o2) {
  FAMNET_CHECK(o1.size() == o2.size(), "late_fuse: score length mismatch (%zu vs %zu)", o1.size(),
               o2.size());
  std::vector<float> out(o1.size());
  for (size_t i = 0; i < o1.size(); ++i) out[i] = 0.5f * (o1[i] + o2[i]);
  return out;
}

inline int argmax_class(const std::vector<float>& scores) {
  FAMNET_CHECK(!scores.empty(), "argmax_class: empty scores");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)]) best = i;
  return best;
}

struct FoldMetrics {
  std::string subject;
  int selected_epoch = -1;
  double uar = 0.0, uf1 = 0.0;
  Confusion confusion{kNumClasses};
  std::vector<double> uar_trace, uf1_trace;
};

struct MetricsReport {
  std::string dataset_id;
  std::string config_hash;
  std::vector<FoldMetrics> folds;
  Confusion pooled{kNumClasses};
  double uar = 0.0, uf1 = 0.0;                      // pooled over fold confusions (primary)
  double uar_fold_mean = 0.0, uf1_fold_mean = 0.0;  // mean of per-fold values (secondary)

  void finalize() {
    pooled = Confusion(kNumClasses);
    double su = 0.0, sf = 0.0;
    for (const auto& f : folds) {
      pooled.merge(f.confusion);
      su += f.uar;
      sf += f.uf1;
    }
    uar = compute_uar(pooled).value;
    uf1 = compute_uf1(pooled).value;
    if (!folds.empty()) {
      uar_fold_mean = su / static_cast<double>(folds.size());
      uf1_fold_mean = sf / static_cast<double>(folds.size());
    }
  }
};

namespace detail {

inline nlohmann::json confusion_json(const Confusion& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < c.C; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < c.C; ++p) row.push_back(c.at(r, p));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["dataset"] = r.dataset_id;
  j["config_hash"] = r.config_hash;
  j["uar"] = r.uar;
  j["uf1"] = r.uf1;
  j["uar_fold_mean"] = r.uar_fold_mean;
  j["uf1_fold_mean"] = r.uf1_fold_mean;
  j["pooled_confusion"] = detail::confusion_json(r.pooled);
  j["classes"] = {coarse_name(Coarse::Positive), coarse_name(Coarse::Negative),
                  coarse_name(Coarse::Surprise)};
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    nlohmann::json fj;
    fj["subject"] = f.subject;
    fj["selected_epoch"] = f.selected_epoch;
    fj["uar"] = f.uar;
    fj["uf1"] = f.uf1;
    fj["confusion"] = detail::confusion_json(f.confusion);
    fj["uar_trace"] = f.uar_trace;
    fj["uf1_trace"] = f.uf1_trace;
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  return j;
}

inline Confusion confusion_from_json(const nlohmann::json& rows) {
  Confusion c(static_cast<int>(rows.size()));
  for (int r = 0; r < c.C; ++r)
    for (int p = 0; p < c.C; ++p)
      c.at(r, p) = rows.at(static_cast<size_t>(r)).at(static_cast<size_t>(p)).get<int64_t>();
  return c;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.dataset_id = j.value("dataset", "");
  r.config_hash = j.value("config_hash", "");
  if (j.contains("folds")) {
    for (const auto& fj : j.at("folds")) {
      FoldMetrics f;
      f.subject = fj.value("subject", "");
      f.selected_epoch = fj.value("selected_epoch", -1);
      f.uar = fj.value("uar", 0.0);
      f.uf1 = fj.value("uf1", 0.0);
      f.confusion = confusion_from_json(fj.at("confusion"));
      if (fj.contains("uar_trace")) f.uar_trace = fj.at("uar_trace").get<std::vector<double>>();
      if (fj.contains("uf1_trace")) f.uf1_trace = fj.at("uf1_trace").get<std::vector<double>>();
      r.folds.push_back(std::move(f));
    }
    r.finalize();
  } else {
    r.pooled = confusion_from_json(j.at("pooled_confusion"));
    r.uar = compute_uar(r.pooled).value;
    r.uf1 = compute_uf1(r.pooled).value;
  }
  return r;
}

// Confusion-matrix heatmap with class labels and counts.
inline Image render_confusion_heatmap(const Confusion& conf) {
  const int cell = 64, left = 70, top = 8, bottom = 16, right = 8;
  const int W = left + conf.C * cell + right;
  const int H = top + conf.C * cell + bottom;
  Image img(W, H);
  fill_rect(img, 0, 0, W, H, 250, 250, 250);
  int64_t mx = 1;
  for (int64_t v : conf.m) mx = std::max(mx, v);
  for (int r = 0; r < conf.C; ++r) {
    for (int p = 0; p < conf.C; ++p) {
      const double t = static_cast<double>(conf.at(r, p)) / static_cast<double>(mx);
      // white -> blue ramp
      const auto shade = static_cast<uint8_t>(std::lround(235.0 * (1.0 - t)));
      fill_rect(img, left + p * cell, top + r * cell, cell - 1, cell - 1, shade, shade, 235);
      const std::string count = std::to_string(conf.at(r, p));
      const uint8_t tc = t > 0.5 ? 240 : 30;
      draw_text(img, left + p * cell + cell / 2 - static_cast<int>(count.size()) * 3,
                top + r * cell + cell / 2 - 3, count, tc, tc, tc);
    }
    draw_text(img, 4, top + r * cell + cell / 2 - 3,
              std::string(coarse_name(static_cast<Coarse>(r))).substr(0, 8), 30, 30, 30);
  }
  for (int p = 0; p < conf.C; ++p) {
    const std::string name = std::string(coarse_name(static_cast<Coarse>(p))).substr(0, 8);
    draw_text(img, left + p * cell + 2, H - bottom + 3, name, 30, 30, 30);
  }
  return img;
}

// Writes metrics.json and confusion.ppm; reports on an empty (zero-sample)
// pool are rejected.
inline void emit_report(const MetricsReport& report, const std::string& out_dir) {
  FAMNET_CHECK(report.pooled.total() > 0, "emit_report: empty report");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  FAMNET_CHECK(fs::is_directory(out_dir), "emit_report: cannot create '%s'", out_dir.c_str());
  {
    std::ofstream f((fs::path(out_dir) / "metrics.json").string());
    FAMNET_CHECK(f.good(), "emit_report: cannot write metrics.json under '%s'", out_dir.c_str());
    f << report_to_json(report).dump(2) << "\n";
    FAMNET_CHECK(f.good(), "emit_report: write failed");
  }
  write_ppm((fs::path(out_dir) / "confusion.ppm").string(),
            render_confusion_heatmap(report.pooled));
  const auto ua = compute_uar(report.pooled);
  for (int c : ua.excluded)
    std::fprintf(stderr, "[metrics] warning: class %s absent from ground truth, excluded\n",
                 coarse_name(static_cast<Coarse>(c)));
}

}  // namespace famnet
