#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "famnet/image.hpp"
#include "famnet/manifest.hpp"
#include "famnet/rng.hpp"
#include "famnet/tensor.hpp"

namespace famnet {

// Canvas size before the final crop (width x height) and the network input
// size.
constexpr int kCanvasW = 234;
constexpr int kCanvasH = 240;
constexpr int kInputSize = 224;

struct FaceBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // corners, half-open on neither side
};

// Face-region provider interface; any detector can be injected here.
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::optional<FaceBox> detect(const Image& img) = 0;
};

// Treats the whole frame as the face region. Used for the synthetic dataset,
// whose generator emits pre-cropped faces.
class FullFrameDetector final : public FaceDetector {
 public:
  std::optional<FaceBox> detect(const Image& img) override {
    return FaceBox{0, 0, img.w, img.h};
  }
};

// Never finds a face; exercises the fallback path.
class NoFaceDetector final : public FaceDetector {
 public:
  std::optional<FaceBox> detect(const Image&) override { return std::nullopt; }
};

struct FaceCropResult {
  Image image;
  bool no_face = false;
};

// Crops to the detected face box; when the detector finds nothing, falls
// back to the largest centered square and flags the sample.
inline FaceCropResult face_crop(const Image& img, FaceDetector& detector) {
  FAMNET_CHECK(img.valid(), "face_crop: unreadable image");
  auto box = detector.detect(img);
  if (!box) {
    const int side = std::min(img.w, img.h);
    return {crop(img, (img.w - side) / 2, (img.h - side) / 2, side, side), true};
  }
  const int x0 = std::clamp(box->x0, 0, img.w - 1);
  const int y0 = std::clamp(box->y0, 0, img.h - 1);
  const int x1 = std::clamp(box->x1, x0 + 1, img.w);
  const int y1 = std::clamp(box->y1, y0 + 1, img.h);
  return {crop(img, x0, y0, x1 - x0, y1 - y0), false};
}

struct AugmentPolicy {
  double rotation_deg = 10.0;     // uniform in [-r, r]
  double flip_prob = 0.5;
  double brightness_lo = 0.8;     // multiplicative factor range
  double brightness_hi = 1.2;
  bool enabled = true;
  uint64_t rng_seed = 0;
};

// Concrete transform drawn from a policy; one draw covers every frame of a
// clip so the geometry stays consistent over time.
struct AugmentParams {
  double angle = 0.0;
  bool flip = false;
  double brightness = 1.0;
  int crop_x = (kCanvasW - kInputSize) / 2;
  int crop_y = (kCanvasH - kInputSize) / 2;
};

inline AugmentParams sample_augment(const AugmentPolicy& policy, uint64_t sample_seed,
                                    bool training) {
  AugmentParams p;
  if (!training) return p;  // eval: identity up to the center crop
  Rng rng(Rng::derive(policy.rng_seed, {0x617567ULL, sample_seed}));
  p.crop_x = static_cast<int>(rng.uniform_int(kCanvasW - kInputSize + 1));
  p.crop_y = static_cast<int>(rng.uniform_int(kCanvasH - kInputSize + 1));
  if (policy.enabled) {
    p.angle = rng.uniform(-policy.rotation_deg, policy.rotation_deg);
    p.flip = rng.uniform() < policy.flip_prob;
    p.brightness = rng.uniform(policy.brightness_lo, policy.brightness_hi);
  }
  return p;
}

// Resize onto the 234x240 canvas, apply the drawn transform, crop 224x224.
inline Image apply_augment(const Image& img, const AugmentParams& p) {
  Image out = resize_bilinear(img, kCanvasW, kCanvasH);
  if (p.angle != 0.0) out = rotate_bilinear(out, p.angle);
  if (p.flip) out = hflip(out);
  if (p.brightness != 1.0) out = scale_brightness(out, p.brightness);
  return crop(out, p.crop_x, p.crop_y, kInputSize, kInputSize);
}

// Plain resize-and-crop without photometric augmentation. Training mode
// crops at a seeded random offset within the canvas, eval mode centrally.
inline Image resize_and_crop(const Image& img, bool training, Rng& rng) {
  AugmentParams p;
  if (training) {
    p.crop_x = static_cast<int>(rng.uniform_int(kCanvasW - kInputSize + 1));
    p.crop_y = static_cast<int>(rng.uniform_int(kCanvasH - kInputSize + 1));
  }
  return apply_augment(img, p);
}

// Channel-first float conversion with per-channel normalization to [-1, 1]
// (mean 0.5, std 0.5 on the unit scale).
inline void frame_to_tensor(const Image& img, float* dst) {
  FAMNET_CHECK(img.w == kInputSize && img.h == kInputSize, "frame_to_tensor: expected %dx%d",
               kInputSize, kInputSize);
  const int64_t plane = static_cast<int64_t>(kInputSize) * kInputSize;
  for (int y = 0; y < kInputSize; ++y)
    for (int x = 0; x < kInputSize; ++x) {
      const uint8_t* p = img.px(x, y);
      const int64_t i = static_cast<int64_t>(y) * kInputSize + x;
      for (int c = 0; c < 3; ++c)
        dst[c * plane + i] = (static_cast<float>(p[c]) / 255.0f - 0.5f) / 0.5f;
    }
}

inline Tensor apex_to_tensor(const Image& img) {
  Tensor t({3, kInputSize, kInputSize});
  frame_to_tensor(img, t.ptr());
  return t;
}

// Uniform temporal sampling: round(linspace(0, length-1, target)). Strictly
// increasing whenever length >= target.
inline std::vector<int> uniform_indices(int length, int target) {
  FAMNET_CHECK(length >= 1 && target >= 1, "uniform_indices: bad arguments");
  std::vector<int> out(static_cast<size_t>(target));
  if (target == 1) {
    out[0] = 0;
    return out;
  }
  for (int i = 0; i < target; ++i) {
    const double pos = static_cast<double>(i) * (length - 1) / (target - 1);
    out[static_cast<size_t>(i)] = std::min(length - 1, static_cast<int>(std::lround(pos)));
  }
  return out;
}

// Stacks 224x224 frames into a normalized [3,224,224,d] clip tensor. Short
// clips are padded by repeating the last frame; long clips are sampled
// uniformly.
inline Tensor assemble_clip(const std::vector<Image>& frames, int target_d = 16) {
  FAMNET_CHECK(!frames.empty(), "assemble_clip: empty frame list");
  FAMNET_CHECK(target_d >= 1, "assemble_clip: bad depth %d", target_d);
  const int L = static_cast<int>(frames.size());
  std::vector<int> idx;
  if (L >= target_d) {
    idx = uniform_indices(L, target_d);
  } else {
    idx.resize(static_cast<size_t>(target_d));
    for (int i = 0; i < target_d; ++i) idx[static_cast<size_t>(i)] = std::min(i, L - 1);
  }
  Tensor t({3, kInputSize, kInputSize, target_d});
  const int64_t plane = static_cast<int64_t>(kInputSize) * kInputSize;
  for (int d = 0; d < target_d; ++d) {
    const Image& f = frames[static_cast<size_t>(idx[static_cast<size_t>(d)])];
    FAMNET_CHECK(f.w == kInputSize && f.h == kInputSize, "assemble_clip: frame %d is %dx%d", d,
                 f.w, f.h);
    for (int y = 0; y < kInputSize; ++y)
      for (int x = 0; x < kInputSize; ++x) {
        const uint8_t* p = f.px(x, y);
        const int64_t i = static_cast<int64_t>(y) * kInputSize + x;
        for (int c = 0; c < 3; ++c)
          t.data[static_cast<size_t>((c * plane + i) * target_d + d)] =
              (static_cast<float>(p[c]) / 255.0f - 0.5f) / 0.5f;
      }
  }
  return t;
}

// --- dataset cache ----------------------------------------------------------

// One usable sample: canvas-sized frames plus resolved labels. Samples whose
// native label falls outside the three-class protocol are dropped at load.
struct LoadedSample {
  std::string subject;
  Coarse label = Coarse::Positive;
  AUVector aus;
  int apex_index = 0;
  std::vector<Image> canvas_frames;  // face-cropped, resized to 234x240
  bool no_face = false;

  int n_frames() const { return static_cast<int>(canvas_frames.size()); }
};

inline std::vector<std::string> list_frame_files(const std::string& dir) {
  std::vector<std::string> files;
  FAMNET_CHECK(std::filesystem::is_directory(dir), "clip directory '%s' not found", dir.c_str());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".ppm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  FAMNET_CHECK(!files.empty(), "clip directory '%s' has no frames", dir.c_str());
  return files;
}

// Loads every mapped sample of a manifest into memory (canvas resolution).
class DatasetCache {
 public:
  DatasetCache() = default;
  DatasetCache(const Manifest& manifest, FaceDetector& detector) : manifest_(manifest) {
    for (const auto& e : manifest.entries) {
      const EmotionMapResult mapped = map_emotion(e.emotion_raw, manifest.dataset_id);
      if (mapped.excluded) {
        ++n_excluded_;
        continue;
      }
      LoadedSample s;
      s.subject = e.subject;
      s.label = mapped.coarse;
      s.aus = manifest.au_bits(e);
      const auto files = list_frame_files(manifest.clip_path(e));
      FAMNET_CHECK(e.apex_index < static_cast<int>(files.size()),
                   "sample '%s': apex index %d outside clip of %zu frames", e.clip_dir.c_str(),
                   e.apex_index, files.size());
      s.apex_index = e.apex_index;
      s.canvas_frames.reserve(files.size());
      for (const auto& f : files) {
        FaceCropResult fc = face_crop(read_ppm(f), detector);
        s.no_face = s.no_face || fc.no_face;
        s.canvas_frames.push_back(resize_bilinear(fc.image, kCanvasW, kCanvasH));
      }
      samples_.push_back(std::move(s));
    }
  }

  const Manifest& manifest() const { return manifest_; }
  const std::vector<LoadedSample>& samples() const { return samples_; }
  int n_excluded() const { return n_excluded_; }

  std::vector<int> indices_of_subjects(const std::vector<std::string>& subjects) const {
    std::vector<int> out;
    for (size_t i = 0; i < samples_.size(); ++i)
      if (std::find(subjects.begin(), subjects.end(), samples_[i].subject) != subjects.end())
        out.push_back(static_cast<int>(i));
    return out;
  }
  std::vector<int> indices_of_subject(const std::string& subject) const {
    return indices_of_subjects({subject});
  }

 private:
  Manifest manifest_;
  std::vector<LoadedSample> samples_;
  int n_excluded_ = 0;
};

// Network-ready single frame (apex or neighbor) of one sample.
inline Tensor make_frame_input(const LoadedSample& s, int frame_index,
                               const AugmentPolicy& policy, bool training, uint64_t sample_seed) {
  FAMNET_CHECK(frame_index >= 0 && frame_index < s.n_frames(),
               "make_frame_input: frame %d outside clip of %d frames", frame_index, s.n_frames());
  const AugmentParams p = sample_augment(policy, sample_seed, training);
  return apex_to_tensor(apply_augment(s.canvas_frames[static_cast<size_t>(frame_index)], p));
}

// Network-ready clip tensor of one sample; all frames share one transform.
inline Tensor make_clip_input(const LoadedSample& s, int depth, const AugmentPolicy& policy,
                              bool training, uint64_t sample_seed) {
  const AugmentParams p = sample_augment(policy, sample_seed, training);
  std::vector<Image> frames;
  frames.reserve(static_cast<size_t>(s.n_frames()));
  for (const auto& f : s.canvas_frames) frames.push_back(apply_augment(f, p));
  return assemble_clip(frames, depth);
}

}  // namespace famnet
