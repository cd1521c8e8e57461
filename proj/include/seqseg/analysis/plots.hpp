#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "seqseg/core/mask_ops.hpp"
#include "seqseg/data/png.hpp"

namespace seqseg::analysis {

using data::Raster;

namespace detail {

// 3×5 glyphs, one row per 3-bit group (MSB = left column).
inline const std::array<std::uint16_t, 5>* glyph(char c) {
  static const std::array<std::array<std::uint16_t, 5>, 12> font{{
      {7, 5, 5, 5, 7},  // 0
      {2, 6, 2, 2, 7},  // 1
      {7, 1, 7, 4, 7},  // 2
      {7, 1, 7, 1, 7},  // 3
      {5, 5, 7, 1, 1},  // 4
      {7, 4, 7, 1, 7},  // 5
      {7, 4, 7, 5, 7},  // 6
      {7, 1, 1, 1, 1},  // 7
      {7, 5, 7, 5, 7},  // 8
      {7, 5, 7, 1, 7},  // 9
      {0, 0, 0, 0, 2},  // .
      {0, 0, 7, 0, 0},  // -
  }};
  if (c >= '0' && c <= '9') return &font[c - '0'];
  if (c == '.') return &font[10];
  if (c == '-') return &font[11];
  return nullptr;
}

inline void set_pixel(Raster& r, int y, int x, std::array<std::uint8_t, 3> rgb) {
  if (y < 0 || x < 0 || y >= r.height || x >= r.width) return;
  std::uint8_t* p = r.pixel(y, x);
  for (int c = 0; c < std::min(3, r.channels); ++c) p[c] = rgb[c];
}

inline constexpr std::array<std::array<std::uint8_t, 3>, 8> kSeriesColors{{{228, 26, 28},
                                                                            {55, 126, 184},
                                                                            {77, 175, 74},
                                                                            {152, 78, 163},
                                                                            {255, 127, 0},
                                                                            {255, 255, 51},
                                                                            {166, 86, 40},
                                                                            {247, 129, 191}}};

}  // namespace detail

/// Draws digits, '.' and '-' with the top-left corner at (y, x); other characters leave a gap.
inline void draw_text(Raster& r, int y, int x, const std::string& text, int scale,
                      std::array<std::uint8_t, 3> rgb, bool outline = false) {
  const auto stamp = [&](int pad, std::array<std::uint8_t, 3> color) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto* g = detail::glyph(text[i]);
      if (!g) continue;
      const int x0 = x + static_cast<int>(i) * 4 * scale;
      for (int gy = 0; gy < 5; ++gy)
        for (int gx = 0; gx < 3; ++gx) {
          if (!(((*g)[gy] >> (2 - gx)) & 1)) continue;
          for (int py = gy * scale - pad; py < (gy + 1) * scale + pad; ++py)
            for (int px = gx * scale - pad; px < (gx + 1) * scale + pad; ++px) detail::set_pixel(r, y + py, x0 + px, color);
        }
    }
  };
  if (outline) stamp(1, {0, 0, 0});
  stamp(0, rgb);
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, std::abs(v) >= 10 || v == std::floor(v) ? "%.0f" : "%.2f", v);
  return buf;
}

/// Vertical bars from a zero line, scaled to the value range, each annotated with its value.
inline Raster bar_chart(const std::vector<double>& values, int bar_width = 24, int height = 160) {
  const int gap = 8, margin = 12;
  const int n = static_cast<int>(values.size());
  Raster r(height, std::max(1, margin * 2 + n * (bar_width + gap)), 3, 255);
  double hi = 0, lo = 0;
  for (double v : values) hi = std::max(hi, v), lo = std::min(lo, v);
  const int top = margin + 8;
  const int usable = height - top - margin - (lo < 0 ? 8 : 0);
  const double span = hi - lo > 0 ? hi - lo : 1.0;
  const int zero = top + static_cast<int>(std::lround(hi / span * usable));
  for (int x = margin - 4; x < r.width - margin + 4; ++x) detail::set_pixel(r, zero, x, {0, 0, 0});
  for (int i = 0; i < n; ++i) {
    const int x0 = margin + i * (bar_width + gap);
    const int h = static_cast<int>(std::lround(std::abs(values[i]) / span * usable));
    const int y0 = values[i] >= 0 ? zero - h : zero + 1;
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + bar_width; ++x) detail::set_pixel(r, y, x, detail::kSeriesColors[i % 8]);
    draw_text(r, values[i] >= 0 ? y0 - 7 : y0 + h + 2, x0, format_value(values[i]), 1, {0, 0, 0});
  }
  return r;
}

/// The image enlarged by `scale`, each mask tinted in its own color and numbered 1.. at its center.
inline Raster numbered_overlay(const ImageSample& image, const std::vector<BinaryMask>& masks, int scale = 4) {
  const Raster base = data::to_raster(image);
  Raster r(base.height * scale, base.width * scale, 3);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      const std::uint8_t* src = &base.data[(static_cast<std::size_t>(y / scale) * base.width + x / scale) * 3];
      std::copy(src, src + 3, r.pixel(y, x));
    }
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const auto& color = detail::kSeriesColors[k % 8];
    const auto& m = masks[k];
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) {
        if (!m.at(y / scale, x / scale)) continue;
        std::uint8_t* p = r.pixel(y, x);
        for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>((p[c] + color[c]) / 2);
      }
  }
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (!masks[k].any()) continue;
    const auto [row, col] = center_of_mass(masks[k]);
    const std::string label = std::to_string(k + 1);
    const int s = 2;
    const int y = static_cast<int>((row + 0.5) * scale) - 5 * s / 2;
    const int x = static_cast<int>((col + 0.5) * scale) - static_cast<int>(label.size()) * 4 * s / 2;
    draw_text(r, y, x, label, s, {255, 255, 255}, true);
  }
  return r;
}

}  // namespace seqseg::analysis
