#pragma once

#include <filesystem>
#include <map>

#include "famnet/image.hpp"
#include "famnet/manifest.hpp"
#include "famnet/rng.hpp"

namespace famnet {

// Procedural micro-expression-like clips: a schematic face whose AU-specific
// blobs ramp up to the apex frame and back down, with per-subject geometry,
// per-subject distractor marks, and photometric nuisance. Emotion and AU
// labels are mutually consistent through the blueprint.
struct SyntheticSpec {
  int n_subjects = 6;
  int samples_per_subject = 12;
  int image_w = kCanvasW;
  int image_h = kCanvasH;
  int clip_len = 8;
  std::vector<std::string> au_vocabulary = {"AU1", "AU2",  "AU4",  "AU5",  "AU6",  "AU7",
                                            "AU9", "AU10", "AU12", "AU14", "AU15", "AU17"};
  std::map<Coarse, std::vector<std::string>> au_blueprint = {
      {Coarse::Positive, {"AU12"}},
      {Coarse::Negative, {"AU4"}},
      {Coarse::Surprise, {"AU1", "AU2", "AU5"}}};
  double noise_level = 0.02;        // std of additive pixel noise, unit scale
  double au_amplitude = 0.30;       // peak blob brightness at the apex
  double distractor_strength = 0.30;
  int distractors_per_subject = 6;
  uint64_t rng_seed = 1;

  void validate() const {
    FAMNET_CHECK(n_subjects >= 2, "synthetic: need at least 2 subjects, got %d", n_subjects);
    FAMNET_CHECK(samples_per_subject >= 1, "synthetic: need at least 1 sample per subject");
    FAMNET_CHECK(clip_len >= 7, "synthetic: clip_len must be >= 7, got %d", clip_len);
    FAMNET_CHECK(image_w >= 64 && image_h >= 64, "synthetic: image size too small");
    FAMNET_CHECK(noise_level >= 0.0 && au_amplitude > 0.0, "synthetic: bad intensity settings");
    FAMNET_CHECK(au_blueprint.size() == 3, "synthetic: blueprint must cover all three emotions");
    std::vector<std::vector<std::string>> sets;
    for (const auto& [emo, aus] : au_blueprint) {
      FAMNET_CHECK(!aus.empty(), "synthetic: empty AU set for %s", coarse_name(emo));
      std::vector<std::string> sorted = aus;
      std::sort(sorted.begin(), sorted.end());
      for (const auto& a : aus)
        FAMNET_CHECK(std::find(au_vocabulary.begin(), au_vocabulary.end(), a) !=
                         au_vocabulary.end(),
                     "synthetic: blueprint AU '%s' not in vocabulary", a.c_str());
      for (const auto& other : sets)
        FAMNET_CHECK(other != sorted, "synthetic: blueprint AU sets must be distinct");
      sets.push_back(std::move(sorted));
    }
  }
};

namespace synth_detail {

struct Blob {
  double cx, cy;      // normalized center
  double sx, sy;      // normalized gaussian radii
  double amp;         // brightness delta, unit scale
};

// Per-subject face geometry (normalized units).
struct FaceGeom {
  double face_cx = 0.50, face_cy = 0.54, face_ax = 0.31, face_ay = 0.41;
  double eye_dx = 0.13, eye_y = 0.42;
  double brow_y = 0.34;
  double mouth_y = 0.74;
  double tint[3] = {1.0, 1.0, 1.0};
  std::vector<Blob> distractors;
};

inline FaceGeom subject_geometry(const SyntheticSpec& spec, int subject) {
  Rng rng(Rng::derive(spec.rng_seed, {0x7375626aULL, static_cast<uint64_t>(subject)}));
  FaceGeom g;
  g.face_cx += rng.uniform(-0.02, 0.02);
  g.face_cy += rng.uniform(-0.02, 0.02);
  g.face_ax *= 1.0 + rng.uniform(-0.06, 0.06);
  g.face_ay *= 1.0 + rng.uniform(-0.06, 0.06);
  g.eye_dx *= 1.0 + rng.uniform(-0.12, 0.12);
  g.eye_y += rng.uniform(-0.02, 0.02);
  g.brow_y = g.eye_y - 0.08 + rng.uniform(-0.01, 0.01);
  g.mouth_y += rng.uniform(-0.025, 0.025);
  for (int c = 0; c < 3; ++c) g.tint[c] = 1.0 + rng.uniform(-0.08, 0.08);
  for (int i = 0; i < spec.distractors_per_subject; ++i) {
    Blob b;
    b.cx = g.face_cx + rng.uniform(-0.6, 0.6) * g.face_ax;
    b.cy = g.face_cy + rng.uniform(-0.6, 0.6) * g.face_ay;
    b.sx = rng.uniform(0.015, 0.05);
    b.sy = rng.uniform(0.015, 0.05);
    b.amp = rng.uniform(0.4, 1.0) * spec.distractor_strength * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    g.distractors.push_back(b);
  }
  return g;
}

// Anatomical anchor of each vocabulary AU on the schematic face. side is -1
// (left), +1 (right) or 0 (midline); bilateral AUs return two blobs.
inline std::vector<Blob> au_blobs(const std::string& au, const FaceGeom& g, double amp) {
  auto two = [&](double dx, double y, double sx, double sy) {
    return std::vector<Blob>{{g.face_cx - dx, y, sx, sy, amp}, {g.face_cx + dx, y, sx, sy, amp}};
  };
  auto one = [&](double x, double y, double sx, double sy) {
    return std::vector<Blob>{{x, y, sx, sy, amp}};
  };
  if (au == "AU1") return two(0.05, g.brow_y - 0.015, 0.030, 0.022);
  if (au == "AU2") return two(0.17, g.brow_y - 0.010, 0.030, 0.022);
  if (au == "AU4") return one(g.face_cx, g.brow_y + 0.012, 0.042, 0.028);
  if (au == "AU5") return two(g.eye_dx, g.eye_y - 0.032, 0.026, 0.018);
  if (au == "AU6") return two(0.14, g.eye_y + 0.10, 0.035, 0.028);
  if (au == "AU7") return two(g.eye_dx, g.eye_y + 0.035, 0.026, 0.016);
  if (au == "AU9") return one(g.face_cx, g.eye_y + 0.07, 0.030, 0.024);
  if (au == "AU10") return one(g.face_cx, g.mouth_y - 0.045, 0.040, 0.020);
  if (au == "AU12") return two(0.11, g.mouth_y + 0.005, 0.032, 0.026);
  if (au == "AU14") return two(0.12, g.mouth_y - 0.010, 0.028, 0.020);
  if (au == "AU15") return two(0.10, g.mouth_y + 0.030, 0.028, 0.020);
  if (au == "AU17") return one(g.face_cx, g.mouth_y + 0.065, 0.040, 0.026);
  FAMNET_CHECK(false, "synthetic: no face anchor for AU '%s'", au.c_str());
  return {};
}

inline void add_gaussian(std::vector<double>& buf, int W, int H, const Blob& b) {
  const double cx = b.cx * W, cy = b.cy * H;
  const double sx = std::max(1.0, b.sx * W), sy = std::max(1.0, b.sy * H);
  const int x0 = std::max(0, static_cast<int>(cx - 3 * sx));
  const int x1 = std::min(W - 1, static_cast<int>(cx + 3 * sx));
  const int y0 = std::max(0, static_cast<int>(cy - 3 * sy));
  const int y1 = std::min(H - 1, static_cast<int>(cy + 3 * sy));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / sx, dy = (y - cy) / sy;
      buf[static_cast<size_t>(y) * W + x] += b.amp * std::exp(-0.5 * (dx * dx + dy * dy));
    }
}

inline void add_ellipse(std::vector<double>& buf, int W, int H, double cx, double cy, double ax,
                        double ay, double value) {
  const double px = cx * W, py = cy * H, rx = ax * W, ry = ay * H;
  const int x0 = std::max(0, static_cast<int>(px - rx - 1));
  const int x1 = std::min(W - 1, static_cast<int>(px + rx + 1));
  const int y0 = std::max(0, static_cast<int>(py - ry - 1));
  const int y1 = std::min(H - 1, static_cast<int>(py + ry + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - px) / rx, dy = (y - py) / ry;
      if (dx * dx + dy * dy <= 1.0) buf[static_cast<size_t>(y) * W + x] = value;
    }
}

// Intensity ramp over the clip: onset -> apex -> offset, peaking at 1.
inline double apex_ramp(int frame, int apex, int clip_len) {
  const int reach = std::max(apex, clip_len - 1 - apex);
  return 1.0 - static_cast<double>(std::abs(frame - apex)) / std::max(1, reach);
}

// Renders one frame. The luminance field is built once per pixel and tinted
// per channel; sampling noise is drawn from the provided stream.
inline Image render_frame(const SyntheticSpec& spec, const FaceGeom& g,
                          const std::vector<std::string>& active_aus, double ramp,
                          double sample_gain, Rng& noise_rng) {
  const int W = spec.image_w, H = spec.image_h;
  std::vector<double> lum(static_cast<size_t>(W) * H, 0.08);  // background
  add_ellipse(lum, W, H, g.face_cx, g.face_cy, g.face_ax, g.face_ay, 0.55);  // skin
  add_ellipse(lum, W, H, g.face_cx - g.eye_dx, g.eye_y, 0.045, 0.024, 0.22);  // eyes
  add_ellipse(lum, W, H, g.face_cx + g.eye_dx, g.eye_y, 0.045, 0.024, 0.22);
  add_ellipse(lum, W, H, g.face_cx - g.eye_dx, g.brow_y, 0.060, 0.012, 0.18);  // brows
  add_ellipse(lum, W, H, g.face_cx + g.eye_dx, g.brow_y, 0.060, 0.012, 0.18);
  add_ellipse(lum, W, H, g.face_cx, g.face_cy + 0.04, 0.016, 0.055, 0.40);  // nose
  add_ellipse(lum, W, H, g.face_cx, g.mouth_y, 0.085, 0.018, 0.20);         // mouth
  for (const auto& d : g.distractors) add_gaussian(lum, W, H, d);
  for (const auto& au : active_aus)
    for (const auto& b : au_blobs(au, g, spec.au_amplitude * ramp)) add_gaussian(lum, W, H, b);

  Image img(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double base = lum[static_cast<size_t>(y) * W + x] * sample_gain;
      uint8_t* px = img.px(x, y);
      for (int c = 0; c < 3; ++c) {
        double v = base * g.tint[c];
        if (spec.noise_level > 0.0) v += noise_rng.normal(0.0, spec.noise_level);
        px[c] = static_cast<uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
      }
    }
  return img;
}

}  // namespace synth_detail

// Materializes the dataset under out_dir and returns the manifest (also
// written to out_dir/manifest.tsv). Deterministic in spec.rng_seed.
inline Manifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  FAMNET_CHECK(fs::is_directory(out_dir), "synthetic: cannot create output dir '%s'",
               out_dir.c_str());

  Manifest m;
  m.dataset_id = "synthetic";
  m.au_vocabulary = spec.au_vocabulary;
  m.base_dir = out_dir;

  const int apex = (spec.clip_len - 1) / 2;
  int global_index = 0;
  for (int s = 0; s < spec.n_subjects; ++s) {
    const synth_detail::FaceGeom geom = synth_detail::subject_geometry(spec, s);
    const std::string subject = strformat("s%02d", s + 1);
    for (int i = 0; i < spec.samples_per_subject; ++i, ++global_index) {
      const Coarse emotion = static_cast<Coarse>(global_index % 3);
      const std::vector<std::string>& aus = spec.au_blueprint.at(emotion);
      Rng sample_rng(Rng::derive(spec.rng_seed,
                                 {0x73616d70ULL, static_cast<uint64_t>(s),
                                  static_cast<uint64_t>(i)}));
      const double gain = 1.0 + sample_rng.uniform(-0.06, 0.06);

      const std::string rel_dir = strformat("%s/sample_%03d", subject.c_str(), i);
      fs::create_directories(fs::path(out_dir) / rel_dir);
      for (int f = 0; f < spec.clip_len; ++f) {
        Rng noise_rng(Rng::derive(spec.rng_seed,
                                  {0x6e6f6973ULL, static_cast<uint64_t>(s),
                                   static_cast<uint64_t>(i), static_cast<uint64_t>(f)}));
        const double ramp = synth_detail::apex_ramp(f, apex, spec.clip_len);
        Image img = synth_detail::render_frame(spec, geom, aus, ramp, gain, noise_rng);
        write_ppm((fs::path(out_dir) / rel_dir / strformat("frame_%03d.ppm", f)).string(), img);
      }

      ManifestEntry e;
      e.clip_dir = rel_dir;
      e.subject = subject;
      switch (emotion) {
        case Coarse::Positive: e.emotion_raw = "positive"; break;
        case Coarse::Negative: e.emotion_raw = "negative"; break;
        case Coarse::Surprise: e.emotion_raw = "surprise"; break;
      }
      e.au_names = aus;
      e.apex_index = apex;
      m.entries.push_back(std::move(e));
    }
  }
  m.save((fs::path(out_dir) / "manifest.tsv").string());
  m.validate(true);
  return m;
}

}  // namespace famnet
