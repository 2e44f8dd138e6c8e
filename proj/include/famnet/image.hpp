#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "famnet/common.hpp"

namespace famnet {

// 8-bit RGB image, interleaved row-major.
struct Image {
  int w = 0, h = 0;
  std::vector<uint8_t> data;

  Image() = default;
  Image(int w_, int h_) : w(w_), h(h_), data(static_cast<size_t>(w_) * h_ * 3, 0) {}

  uint8_t* px(int x, int y) { return data.data() + (static_cast<size_t>(y) * w + x) * 3; }
  const uint8_t* px(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * w + x) * 3;
  }
  bool valid() const { return w > 0 && h > 0 && data.size() == static_cast<size_t>(w) * h * 3; }
};

// Binary PPM (P6, maxval 255).
inline void write_ppm(const std::string& path, const Image& img) {
  FAMNET_CHECK(img.valid(), "write_ppm: invalid image");
  std::ofstream f(path, std::ios::binary);
  FAMNET_CHECK(f.good(), "write_ppm: cannot open '%s'", path.c_str());
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  FAMNET_CHECK(f.good(), "write_ppm: write failed for '%s'", path.c_str());
}

inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  FAMNET_CHECK(f.good(), "read_ppm: cannot open '%s'", path.c_str());
  std::string magic;
  f >> magic;
  FAMNET_CHECK(magic == "P6", "read_ppm: '%s' is not a P6 PPM", path.c_str());
  auto next_int = [&]() {
    int v;
    // skip whitespace and '#' comments
    while (true) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    f >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  FAMNET_CHECK(w > 0 && h > 0 && maxval == 255, "read_ppm: unsupported header in '%s'",
               path.c_str());
  f.get();  // single whitespace after maxval
  Image img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  FAMNET_CHECK(f.gcount() == static_cast<std::streamsize>(img.data.size()),
               "read_ppm: truncated pixel data in '%s'", path.c_str());
  return img;
}

inline Image resize_bilinear(const Image& src, int w, int h) {
  FAMNET_CHECK(src.valid() && w > 0 && h > 0, "resize_bilinear: bad arguments");
  if (src.w == w && src.h == h) return src;
  Image dst(w, h);
  const double sx = static_cast<double>(src.w) / w;
  const double sy = static_cast<double>(src.h) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    y0 = std::clamp(y0, 0, src.h - 1);
    const int y1 = std::min(y0 + 1, src.h - 1);
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      x0 = std::clamp(x0, 0, src.w - 1);
      const int x1 = std::min(x0 + 1, src.w - 1);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.px(x0, y0)[c] + wx * src.px(x1, y0)[c]) +
                         wy * ((1 - wx) * src.px(x0, y1)[c] + wx * src.px(x1, y1)[c]);
        dst.px(x, y)[c] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return dst;
}

inline Image crop(const Image& src, int x0, int y0, int w, int h) {
  FAMNET_CHECK(x0 >= 0 && y0 >= 0 && x0 + w <= src.w && y0 + h <= src.h && w > 0 && h > 0,
               "crop: window (%d,%d,%dx%d) outside %dx%d image", x0, y0, w, h, src.w, src.h);
  Image dst(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(src.px(x0, y0 + y), static_cast<size_t>(w) * 3, dst.px(0, y));
  return dst;
}

inline Image hflip(const Image& src) {
  Image dst(src.w, src.h);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x)
      std::copy_n(src.px(src.w - 1 - x, y), 3, dst.px(x, y));
  return dst;
}

// Rotation about the image center with bilinear sampling; border pixels are
// replicated.
inline Image rotate_bilinear(const Image& src, double degrees) {
  if (degrees == 0.0) return src;
  Image dst(src.w, src.h);
  const double rad = degrees * M_PI / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double cx = (src.w - 1) / 2.0, cy = (src.h - 1) / 2.0;
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      // inverse map
      const double dx = x - cx, dy = y - cy;
      const double fx = ca * dx + sa * dy + cx;
      const double fy = -sa * dx + ca * dy + cy;
      int x0 = static_cast<int>(std::floor(fx));
      int y0 = static_cast<int>(std::floor(fy));
      const double wx = fx - x0, wy = fy - y0;
      const int x0c = std::clamp(x0, 0, src.w - 1), x1c = std::clamp(x0 + 1, 0, src.w - 1);
      const int y0c = std::clamp(y0, 0, src.h - 1), y1c = std::clamp(y0 + 1, 0, src.h - 1);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.px(x0c, y0c)[c] + wx * src.px(x1c, y0c)[c]) +
                         wy * ((1 - wx) * src.px(x0c, y1c)[c] + wx * src.px(x1c, y1c)[c]);
        dst.px(x, y)[c] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  return dst;
}

inline Image scale_brightness(const Image& src, double factor) {
  if (factor == 1.0) return src;
  Image dst = src;
  for (uint8_t& v : dst.data)
    v = static_cast<uint8_t>(std::clamp(std::lround(v * factor), 0L, 255L));
  return dst;
}

// --- minimal 5x7 bitmap font for report images -----------------------------

namespace fontdata {

inline const uint8_t* glyph(char c) {
  // clang-format off
  static const uint8_t kAZ[26][7] = {
      {0x0E,0x11,0x11,0x1F,0x11,0x11,0x11}, {0x1E,0x11,0x11,0x1E,0x11,0x11,0x1E},
      {0x0E,0x11,0x10,0x10,0x10,0x11,0x0E}, {0x1E,0x11,0x11,0x11,0x11,0x11,0x1E},
      {0x1F,0x10,0x10,0x1E,0x10,0x10,0x1F}, {0x1F,0x10,0x10,0x1E,0x10,0x10,0x10},
      {0x0E,0x11,0x10,0x17,0x11,0x11,0x0F}, {0x11,0x11,0x11,0x1F,0x11,0x11,0x11},
      {0x0E,0x04,0x04,0x04,0x04,0x04,0x0E}, {0x07,0x02,0x02,0x02,0x02,0x12,0x0C},
      {0x11,0x12,0x14,0x18,0x14,0x12,0x11}, {0x10,0x10,0x10,0x10,0x10,0x10,0x1F},
      {0x11,0x1B,0x15,0x15,0x11,0x11,0x11}, {0x11,0x19,0x15,0x13,0x11,0x11,0x11},
      {0x0E,0x11,0x11,0x11,0x11,0x11,0x0E}, {0x1E,0x11,0x11,0x1E,0x10,0x10,0x10},
      {0x0E,0x11,0x11,0x11,0x15,0x12,0x0D}, {0x1E,0x11,0x11,0x1E,0x14,0x12,0x11},
      {0x0F,0x10,0x10,0x0E,0x01,0x01,0x1E}, {0x1F,0x04,0x04,0x04,0x04,0x04,0x04},
      {0x11,0x11,0x11,0x11,0x11,0x11,0x0E}, {0x11,0x11,0x11,0x11,0x11,0x0A,0x04},
      {0x11,0x11,0x11,0x15,0x15,0x1B,0x11}, {0x11,0x11,0x0A,0x04,0x0A,0x11,0x11},
      {0x11,0x11,0x0A,0x04,0x04,0x04,0x04}, {0x1F,0x01,0x02,0x04,0x08,0x10,0x1F}};
  static const uint8_t kDigits[10][7] = {
      {0x0E,0x11,0x13,0x15,0x19,0x11,0x0E}, {0x04,0x0C,0x04,0x04,0x04,0x04,0x0E},
      {0x0E,0x11,0x01,0x06,0x08,0x10,0x1F}, {0x0E,0x11,0x01,0x06,0x01,0x11,0x0E},
      {0x02,0x06,0x0A,0x12,0x1F,0x02,0x02}, {0x1F,0x10,0x1E,0x01,0x01,0x11,0x0E},
      {0x06,0x08,0x10,0x1E,0x11,0x11,0x0E}, {0x1F,0x01,0x02,0x04,0x08,0x08,0x08},
      {0x0E,0x11,0x11,0x0E,0x11,0x11,0x0E}, {0x0E,0x11,0x11,0x0F,0x01,0x02,0x0C}};
  static const uint8_t kDot[7] = {0,0,0,0,0,0x0C,0x0C};
  static const uint8_t kDash[7] = {0,0,0,0x1F,0,0,0};
  static const uint8_t kColon[7] = {0,0x0C,0x0C,0,0x0C,0x0C,0};
  static const uint8_t kSpace[7] = {0,0,0,0,0,0,0};
  // clang-format on
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  if (c >= 'A' && c <= 'Z') return kAZ[c - 'A'];
  if (c >= '0' && c <= '9') return kDigits[c - '0'];
  switch (c) {
    case '.': return kDot;
    case '-': return kDash;
    case ':': return kColon;
    default: return kSpace;
  }
}

}  // namespace fontdata

inline void fill_rect(Image& img, int x0, int y0, int w, int h, uint8_t r, uint8_t g, uint8_t b) {
  for (int y = std::max(0, y0); y < std::min(img.h, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(img.w, x0 + w); ++x) {
      uint8_t* p = img.px(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
}

inline void draw_text(Image& img, int x0, int y0, const std::string& text, uint8_t r, uint8_t g,
                      uint8_t b, int scale = 1) {
  int cx = x0;
  for (char c : text) {
    const uint8_t* gl = fontdata::glyph(c);
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col)
        if (gl[row] & (1 << (4 - col)))
          fill_rect(img, cx + col * scale, y0 + row * scale, scale, scale, r, g, b);
    cx += 6 * scale;
  }
}

}  // namespace famnet
