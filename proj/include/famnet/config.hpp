#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "famnet/common.hpp"

namespace famnet {

enum class Branch { TwoD, ThreeD, Fused };
enum class TaskMode { Single, Dual };

inline Branch branch_from_string(const std::string& s) {
  if (s == "2d") return Branch::TwoD;
  if (s == "3d") return Branch::ThreeD;
  if (s == "fused") return Branch::Fused;
  throw Error(strformat("unknown branch '%s' (expected 2d|3d|fused)", s.c_str()));
}
inline const char* branch_to_string(Branch b) {
  switch (b) {
    case Branch::TwoD: return "2d";
    case Branch::ThreeD: return "3d";
    case Branch::Fused: return "fused";
  }
  return "?";
}
inline TaskMode task_mode_from_string(const std::string& s) {
  if (s == "single") return TaskMode::Single;
  if (s == "dual") return TaskMode::Dual;
  throw Error(strformat("unknown task mode '%s' (expected single|dual)", s.c_str()));
}
inline const char* task_mode_to_string(TaskMode m) {
  return m == TaskMode::Single ? "single" : "dual";
}

struct TrainConfig {
  Branch branch = Branch::TwoD;
  TaskMode task_mode = TaskMode::Dual;
  double lr = 1e-4;
  double lr_decay = 0.92;  // exponential decay factor per epoch
  int epochs = 100;
  int batch_size = 16;
  uint64_t seed = 1;
  float width = 1.0f;
  int clip_depth = 16;
  bool use_attention = true;
  bool apex_expand = true;  // enrich 2D training with apex neighbors
  bool augment = true;
  std::string au_weight_mode = "uniform";  // uniform | inverse_frequency
  int parallel_folds = 1;

  void validate() const {
    FAMNET_CHECK(lr > 0.0 && lr_decay > 0.0 && lr_decay <= 1.0, "config: bad lr/decay");
    FAMNET_CHECK(epochs >= 0 && batch_size >= 1, "config: bad epochs/batch");
    FAMNET_CHECK(width > 0.0f, "config: bad width");
    FAMNET_CHECK(clip_depth >= 8 && clip_depth % 8 == 0,
                 "config: clip_depth must be a positive multiple of 8");
    FAMNET_CHECK(au_weight_mode == "uniform" || au_weight_mode == "inverse_frequency",
                 "config: bad au_weight_mode '%s'", au_weight_mode.c_str());
    FAMNET_CHECK(parallel_folds >= 1, "config: bad parallel_folds");
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"branch", branch_to_string(c.branch)},
                        {"task", task_mode_to_string(c.task_mode)},
                        {"lr", c.lr},
                        {"lr_decay", c.lr_decay},
                        {"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"seed", c.seed},
                        {"width", c.width},
                        {"clip_depth", c.clip_depth},
                        {"use_attention", c.use_attention},
                        {"apex_expand", c.apex_expand},
                        {"augment", c.augment},
                        {"au_weight_mode", c.au_weight_mode},
                        {"parallel_folds", c.parallel_folds}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("branch")) c.branch = branch_from_string(j.at("branch").get<std::string>());
  if (j.contains("task")) c.task_mode = task_mode_from_string(j.at("task").get<std::string>());
  if (j.contains("lr")) c.lr = j.at("lr").get<double>();
  if (j.contains("lr_decay")) c.lr_decay = j.at("lr_decay").get<double>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("width")) c.width = j.at("width").get<float>();
  if (j.contains("clip_depth")) c.clip_depth = j.at("clip_depth").get<int>();
  if (j.contains("use_attention")) c.use_attention = j.at("use_attention").get<bool>();
  if (j.contains("apex_expand")) c.apex_expand = j.at("apex_expand").get<bool>();
  if (j.contains("augment")) c.augment = j.at("augment").get<bool>();
  if (j.contains("au_weight_mode")) c.au_weight_mode = j.at("au_weight_mode").get<std::string>();
  if (j.contains("parallel_folds")) c.parallel_folds = j.at("parallel_folds").get<int>();
  c.validate();
  return c;
}

// Applies "a.b=value" style overrides onto a JSON document. Values parse as
// JSON when possible, else as strings.
inline void apply_override(nlohmann::json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  FAMNET_CHECK(eq != std::string::npos && eq > 0, "override '%s' is not key=value", kv.c_str());
  const std::string key = kv.substr(0, eq);
  const std::string val = kv.substr(eq + 1);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(val);
  } catch (const nlohmann::json::exception&) {
    parsed = val;
  }
  nlohmann::json* cur = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    FAMNET_CHECK(!part.empty(), "override '%s' has an empty key segment", kv.c_str());
    if (dot == std::string::npos) {
      (*cur)[part] = parsed;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

// FNV-1a hash of the canonical (dumped) JSON; identifies a resolved config.
inline std::string config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return strformat("%016llx", static_cast<unsigned long long>(h));
}

}  // namespace famnet
