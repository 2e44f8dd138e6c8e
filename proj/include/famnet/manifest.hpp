#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "famnet/common.hpp"

namespace famnet {

// The three-way emotion protocol shared by all supported datasets.
enum class Coarse : int { Positive = 0, Negative = 1, Surprise = 2 };
constexpr int kNumClasses = 3;

inline const char* coarse_name(Coarse c) {
  switch (c) {
    case Coarse::Positive: return "Positive";
    case Coarse::Negative: return "Negative";
    case Coarse::Surprise: return "Surprise";
  }
  return "?";
}

struct EmotionLabel {
  std::string raw_name;
  Coarse coarse;
};

namespace detail {

inline std::string normalize_token(const std::string& s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string canonical_dataset_id(const std::string& id) {
  const std::string n = normalize_token(id);
  if (n == "casmeii" || n == "casme2") return "casme2";
  if (n == "casme3" || n == "casmeiii") return "casme3";
  if (n == "samm") return "samm";
  if (n == "mmew") return "mmew";
  if (n == "synthetic") return "synthetic";
  return "";
}

}  // namespace detail

// Result of mapping a dataset-native label: either one of the three coarse
// classes, or a recognized label outside the protocol (caller drops the
// sample). Unknown labels throw.
struct EmotionMapResult {
  bool excluded = false;
  Coarse coarse = Coarse::Positive;
};

inline EmotionMapResult map_emotion(const std::string& raw_name, const std::string& dataset_id) {
  const std::string ds = detail::canonical_dataset_id(dataset_id);
  FAMNET_CHECK(!ds.empty(), "map_emotion: unsupported dataset '%s'", dataset_id.c_str());
  const std::string raw = detail::normalize_token(raw_name);
  auto mapped = [](Coarse c) { return EmotionMapResult{false, c}; };
  auto excluded = [] { return EmotionMapResult{true, Coarse::Positive}; };

  if (ds == "casme2" || ds == "casme3") {
    if (raw == "happiness") return mapped(Coarse::Positive);
    if (raw == "disgust" || raw == "sadness" || raw == "fear") return mapped(Coarse::Negative);
    if (raw == "surprise") return mapped(Coarse::Surprise);
    if (raw == "others" || raw == "other" || raw == "repression" || raw == "depression")
      return excluded();
  } else if (ds == "samm" || ds == "mmew") {
    if (raw == "happiness") return mapped(Coarse::Positive);
    if (raw == "sadness" || raw == "contempt" || raw == "anger" || raw == "fear" ||
        raw == "disgust")
      return mapped(Coarse::Negative);
    if (raw == "surprise") return mapped(Coarse::Surprise);
    if (raw == "others" || raw == "other") return excluded();
  } else if (ds == "synthetic") {
    if (raw == "positive") return mapped(Coarse::Positive);
    if (raw == "negative") return mapped(Coarse::Negative);
    if (raw == "surprise") return mapped(Coarse::Surprise);
  }
  throw Error(strformat("map_emotion: unknown label '%s' for dataset '%s'", raw_name.c_str(),
                        dataset_id.c_str()));
}

// Binary AU annotation against a manifest-declared vocabulary.
struct AUVector {
  std::vector<uint8_t> bits;

  int size() const { return static_cast<int>(bits.size()); }
  int count() const {
    int c = 0;
    for (uint8_t b : bits) c += b;
    return c;
  }
};

struct ManifestEntry {
  std::string clip_dir;
  std::string subject;
  std::string emotion_raw;
  std::vector<std::string> au_names;
  int apex_index = 0;
};

// Line-delimited dataset manifest. First line declares the dataset id and
// the ordered AU vocabulary; each following line is one sample:
//   clip_dir<TAB>subject<TAB>emotion_raw<TAB>au1;au2;...<TAB>apex_index
// An AU list of "-" means no annotated AUs.
struct Manifest {
  std::string dataset_id;
  std::vector<std::string> au_vocabulary;
  std::vector<ManifestEntry> entries;
  std::string base_dir;  // directory of the manifest file; clip_dirs are relative to it

  int au_index(const std::string& name) const {
    for (size_t i = 0; i < au_vocabulary.size(); ++i)
      if (au_vocabulary[i] == name) return static_cast<int>(i);
    return -1;
  }

  AUVector au_bits(const ManifestEntry& e) const {
    AUVector v;
    v.bits.assign(au_vocabulary.size(), 0);
    for (const auto& name : e.au_names) {
      const int idx = au_index(name);
      FAMNET_CHECK(idx >= 0, "manifest: AU '%s' not in vocabulary", name.c_str());
      v.bits[static_cast<size_t>(idx)] = 1;
    }
    return v;
  }

  std::string clip_path(const ManifestEntry& e) const {
    if (base_dir.empty() || std::filesystem::path(e.clip_dir).is_absolute()) return e.clip_dir;
    return (std::filesystem::path(base_dir) / e.clip_dir).string();
  }

  // Unique subject ids in first-appearance order.
  std::vector<std::string> subjects() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (std::find(out.begin(), out.end(), e.subject) == out.end()) out.push_back(e.subject);
    return out;
  }

  void validate(bool check_paths) const {
    FAMNET_CHECK(!dataset_id.empty(), "manifest: missing dataset_id");
    FAMNET_CHECK(!au_vocabulary.empty(), "manifest: empty AU vocabulary");
    for (const auto& e : entries) {
      FAMNET_CHECK(!e.subject.empty(), "manifest: empty subject id in '%s'", e.clip_dir.c_str());
      FAMNET_CHECK(e.apex_index >= 0, "manifest: negative apex index in '%s'", e.clip_dir.c_str());
      for (const auto& a : e.au_names)
        FAMNET_CHECK(au_index(a) >= 0, "manifest: AU '%s' of '%s' not in vocabulary", a.c_str(),
                     e.clip_dir.c_str());
      if (check_paths)
        FAMNET_CHECK(std::filesystem::is_directory(clip_path(e)),
                     "manifest: clip directory '%s' not found", clip_path(e).c_str());
    }
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    FAMNET_CHECK(f.good(), "manifest: cannot write '%s'", path.c_str());
    f << "famnet-manifest v1\tdataset_id=" << dataset_id << "\tau_vocabulary=";
    for (size_t i = 0; i < au_vocabulary.size(); ++i) {
      if (i) f << ";";
      f << au_vocabulary[i];
    }
    f << "\n";
    for (const auto& e : entries) {
      f << e.clip_dir << "\t" << e.subject << "\t" << e.emotion_raw << "\t";
      if (e.au_names.empty()) {
        f << "-";
      } else {
        for (size_t i = 0; i < e.au_names.size(); ++i) {
          if (i) f << ";";
          f << e.au_names[i];
        }
      }
      f << "\t" << e.apex_index << "\n";
    }
    FAMNET_CHECK(f.good(), "manifest: write failed for '%s'", path.c_str());
  }

  static Manifest load(const std::string& path, bool check_paths = true) {
    std::ifstream f(path);
    FAMNET_CHECK(f.good(), "manifest: cannot open '%s'", path.c_str());
    Manifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    std::string line;
    FAMNET_CHECK(static_cast<bool>(std::getline(f, line)), "manifest: empty file '%s'",
                 path.c_str());
    {
      std::istringstream hs(line);
      std::string tag;
      std::getline(hs, tag, '\t');
      FAMNET_CHECK(tag.rfind("famnet-manifest", 0) == 0, "manifest: bad header in '%s'",
                   path.c_str());
      std::string field;
      while (std::getline(hs, field, '\t')) {
        if (field.rfind("dataset_id=", 0) == 0) {
          m.dataset_id = field.substr(11);
        } else if (field.rfind("au_vocabulary=", 0) == 0) {
          std::istringstream vs(field.substr(14));
          std::string au;
          while (std::getline(vs, au, ';'))
            if (!au.empty()) m.au_vocabulary.push_back(au);
        }
      }
    }
    int lineno = 1;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      ManifestEntry e;
      std::string aus, apex;
      FAMNET_CHECK(static_cast<bool>(std::getline(ls, e.clip_dir, '\t')) &&
                       static_cast<bool>(std::getline(ls, e.subject, '\t')) &&
                       static_cast<bool>(std::getline(ls, e.emotion_raw, '\t')) &&
                       static_cast<bool>(std::getline(ls, aus, '\t')) &&
                       static_cast<bool>(std::getline(ls, apex)),
                   "manifest: malformed record at %s:%d", path.c_str(), lineno);
      if (aus != "-") {
        std::istringstream as(aus);
        std::string au;
        while (std::getline(as, au, ';'))
          if (!au.empty()) e.au_names.push_back(au);
      }
      try {
        e.apex_index = std::stoi(apex);
      } catch (const std::exception&) {
        throw Error(strformat("manifest: bad apex index at %s:%d", path.c_str(), lineno));
      }
      m.entries.push_back(std::move(e));
    }
    m.validate(check_paths);
    return m;
  }
};

// One leave-one-subject-out fold.
struct Fold {
  std::string test_subject;
  std::vector<std::string> train_subjects;
};

inline std::vector<Fold> loso_folds(const Manifest& m) {
  std::vector<std::string> subs = m.subjects();
  std::sort(subs.begin(), subs.end());
  FAMNET_CHECK(subs.size() >= 2, "loso_folds: need at least 2 subjects, got %zu", subs.size());
  std::vector<Fold> folds;
  folds.reserve(subs.size());
  for (const auto& s : subs) {
    Fold f;
    f.test_subject = s;
    for (const auto& t : subs)
      if (t != s) f.train_subjects.push_back(t);
    folds.push_back(std::move(f));
  }
  return folds;
}

// Apex frame plus six neighbors, three per side; the window shifts (never
// shrinks) at clip boundaries.
inline std::vector<int> expand_apex_neighbors(int apex_index, int sequence_length) {
  FAMNET_CHECK(sequence_length >= 7, "expand_apex_neighbors: sequence of %d frames is too short",
               sequence_length);
  FAMNET_CHECK(apex_index >= 0 && apex_index < sequence_length,
               "expand_apex_neighbors: apex %d outside [0,%d)", apex_index, sequence_length);
  const int lo = std::clamp(apex_index - 3, 0, sequence_length - 7);
  std::vector<int> out(7);
  for (int i = 0; i < 7; ++i) out[static_cast<size_t>(i)] = lo + i;
  return out;
}

}  // namespace famnet
