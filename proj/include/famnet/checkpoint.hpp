#pragma once

#include <algorithm>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "famnet/model.hpp"

namespace famnet {

// Versioned checkpoint container: a JSON config block followed by named
// float arrays (trainable parameters and batch-norm running statistics),
// sorted by name.
//
//   magic "FAMCKPT1" | u32 version | u32 json_len | json |
//   u64 n_entries | { u32 name_len | name | u32 ndim | i32 dims[] | f32 data[] }*

namespace detail {

constexpr char kCkptMagic[8] = {'F', 'A', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  FAMNET_CHECK(f.good(), "checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"is3d", c.is3d},
                        {"width", c.width},
                        {"n_au", c.n_au},
                        {"n_classes", c.n_classes},
                        {"use_attention", c.use_attention},
                        {"clip_depth", c.clip_depth},
                        {"init_seed", c.init_seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.is3d = j.at("is3d").get<bool>();
  c.width = j.at("width").get<float>();
  c.n_au = j.at("n_au").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.use_attention = j.at("use_attention").get<bool>();
  c.clip_depth = j.at("clip_depth").get<int>();
  c.init_seed = j.at("init_seed").get<uint64_t>();
  return c;
}

inline void save_checkpoint(const std::string& path, BranchModel& model) {
  std::vector<std::pair<std::string, const Tensor*>> entries;
  ParamMap pm;
  BufferMap bm;
  model.collect(pm, bm);
  for (const auto& [name, p] : pm.items) entries.emplace_back(name, &p->val);
  for (const auto& [name, t] : bm.items) entries.emplace_back(name, t);
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::ofstream f(path, std::ios::binary);
  FAMNET_CHECK(f.good(), "checkpoint: cannot write '%s'", path.c_str());
  f.write(detail::kCkptMagic, 8);
  detail::write_pod(f, detail::kCkptVersion);
  const std::string cfg = model_config_to_json(model.config()).dump();
  detail::write_pod(f, static_cast<uint32_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::write_pod(f, static_cast<uint64_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::write_pod(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(f, static_cast<uint32_t>(t->shape.size()));
    for (int d : t->shape) detail::write_pod(f, static_cast<int32_t>(d));
    f.write(reinterpret_cast<const char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(float)));
  }
  FAMNET_CHECK(f.good(), "checkpoint: write failed for '%s'", path.c_str());
}

struct Checkpoint {
  ModelConfig config;
  std::map<std::string, Tensor> entries;

  bool has(const std::string& name) const { return entries.count(name) > 0; }
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  FAMNET_CHECK(f.good(), "checkpoint: cannot open '%s'", path.c_str());
  char magic[8];
  f.read(magic, 8);
  FAMNET_CHECK(f.good() && std::equal(magic, magic + 8, detail::kCkptMagic),
               "checkpoint: '%s' is not a famnet checkpoint", path.c_str());
  const auto version = detail::read_pod<uint32_t>(f);
  FAMNET_CHECK(version == detail::kCkptVersion, "checkpoint: unsupported version %u", version);
  const auto json_len = detail::read_pod<uint32_t>(f);
  std::string cfg(json_len, '\0');
  f.read(cfg.data(), json_len);
  FAMNET_CHECK(f.good(), "checkpoint: truncated config block");
  Checkpoint ck;
  ck.config = model_config_from_json(nlohmann::json::parse(cfg));
  const auto n = detail::read_pod<uint64_t>(f);
  for (uint64_t i = 0; i < n; ++i) {
    const auto name_len = detail::read_pod<uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto ndim = detail::read_pod<uint32_t>(f);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = detail::read_pod<int32_t>(f);
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    FAMNET_CHECK(f.good(), "checkpoint: truncated entry '%s'", name.c_str());
    ck.entries.emplace(std::move(name), std::move(t));
  }
  return ck;
}

// Builds a model from the checkpoint's config and restores every entry.
// Strict in both directions: unknown and missing names are errors.
inline std::unique_ptr<BranchModel> model_from_checkpoint(const Checkpoint& ck) {
  auto model = make_branch_model(ck.config);
  ParamMap pm;
  BufferMap bm;
  model->collect(pm, bm);
  size_t restored = 0;
  for (const auto& [name, p] : pm.items) {
    auto it = ck.entries.find(name);
    FAMNET_CHECK(it != ck.entries.end(), "checkpoint: missing parameter '%s'", name.c_str());
    FAMNET_CHECK(it->second.shape == p->val.shape, "checkpoint: shape mismatch for '%s'",
                 name.c_str());
    p->val = it->second;
    ++restored;
  }
  for (const auto& [name, t] : bm.items) {
    auto it = ck.entries.find(name);
    FAMNET_CHECK(it != ck.entries.end(), "checkpoint: missing buffer '%s'", name.c_str());
    FAMNET_CHECK(it->second.shape == t->shape, "checkpoint: shape mismatch for '%s'",
                 name.c_str());
    *t = it->second;
    ++restored;
  }
  FAMNET_CHECK(restored == ck.entries.size(),
               "checkpoint: %zu stored entries but model has %zu slots", ck.entries.size(),
               restored);
  return model;
}

inline std::unique_ptr<BranchModel> load_model(const std::string& path) {
  return model_from_checkpoint(load_checkpoint(path));
}

}  // namespace famnet
