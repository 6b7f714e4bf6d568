#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "utd/image.hpp"
#include "utd/postprocess.hpp"

namespace utd {

struct Rgb {
  std::uint8_t r, g, b;
};

inline Rgb class_color(int class_id) {
  static constexpr std::array<Rgb, 8> palette{{{255, 56, 56},
                                              {255, 157, 151},
                                              {255, 112, 31},
                                              {255, 178, 29},
                                              {207, 210, 49},
                                              {72, 249, 10},
                                              {26, 147, 52},
                                              {0, 212, 187}}};
  const auto n = static_cast<int>(palette.size());
  return palette[static_cast<std::size_t>(((class_id % n) + n) % n)];
}

inline std::string color_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

/// "x,y w×h s=score" with integer geometry and two-decimal score. The raster
/// font has no multiplication sign, so `times` picks the separator.
inline std::string detection_label(const Detection& d, const char* times = "\xC3\x97") {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%ld,%ld %ld%s%ld s=%.2f", std::lround(d.box.x_min), std::lround(d.box.y_min),
                std::lround(d.box.width()), times, std::lround(d.box.height()), d.score);
  return buf;
}

namespace detail {

// 3x5 glyphs, one row per 3-bit value, most significant bit leftmost.
inline const std::array<std::uint8_t, 5>* glyph(char ch) {
  static constexpr std::array<std::uint8_t, 5> digits[10] = {
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
      {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
  static constexpr std::array<std::uint8_t, 5> comma{0, 0, 0, 2, 4};
  static constexpr std::array<std::uint8_t, 5> dot{0, 0, 0, 0, 2};
  static constexpr std::array<std::uint8_t, 5> cross{0, 5, 2, 5, 0};
  static constexpr std::array<std::uint8_t, 5> s{0, 3, 2, 1, 6};
  static constexpr std::array<std::uint8_t, 5> eq{0, 7, 0, 7, 0};
  static constexpr std::array<std::uint8_t, 5> minus{0, 0, 7, 0, 0};
  if (ch >= '0' && ch <= '9') return &digits[ch - '0'];
  switch (ch) {
    case ',': return &comma;
    case '.': return &dot;
    case 'x': return &cross;
    case 's': return &s;
    case '=': return &eq;
    case '-': return &minus;
    default: return nullptr;
  }
}

inline void put(Image& img, long x, long y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.w || y >= img.h) return;
  img.at(static_cast<int>(x), static_cast<int>(y), 0) = c.r;
  img.at(static_cast<int>(x), static_cast<int>(y), 1) = c.g;
  img.at(static_cast<int>(x), static_cast<int>(y), 2) = c.b;
}

inline void draw_text(Image& img, long x, long y, const std::string& text, Rgb c) {
  for (char ch : text) {
    if (const auto* g = glyph(ch)) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if ((*g)[static_cast<std::size_t>(row)] & (4 >> col)) put(img, x + col, y + row, c);
    }
    x += 4;
  }
}

inline Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.w, img.h, 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, 0);
  return out;
}

}  // namespace detail

/// Draws each box as a 1-pixel outline through the rounded corner pixels
/// (x_min, y_min) and (x_max, y_max), with its label above (or inside, at the
/// top edge). Grayscale input is promoted to RGB only when something is drawn.
inline Image render_overlay(const Image& image, const std::vector<Detection>& dets) {
  if (dets.empty()) return image;
  Image out = detail::to_rgb(image);
  for (const auto& d : dets) {
    const Rgb c = class_color(d.class_id);
    const long x0 = std::lround(d.box.x_min), y0 = std::lround(d.box.y_min);
    const long x1 = std::lround(d.box.x_max), y1 = std::lround(d.box.y_max);
    for (long x = x0; x <= x1; ++x) {
      detail::put(out, x, y0, c);
      detail::put(out, x, y1, c);
    }
    for (long y = y0; y <= y1; ++y) {
      detail::put(out, x0, y, c);
      detail::put(out, x1, y, c);
    }
    const long ty = y0 >= 7 ? y0 - 7 : y0 + 2;
    detail::draw_text(out, x0 + (y0 >= 7 ? 0 : 2), ty, detection_label(d, "x"), c);
  }
  return out;
}

/// Vector overlay; `href` (if non-empty) references the background image.
inline std::string render_svg(int width, int height, const std::vector<Detection>& dets,
                              const std::string& href = {}) {
  std::string s;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                width, height, width, height);
  s += buf;
  if (!href.empty()) {
    std::snprintf(buf, sizeof buf, "  <image href=\"%s\" x=\"0\" y=\"0\" width=\"%d\" height=\"%d\"/>\n",
                  href.c_str(), width, height);
    s += buf;
  }
  for (const auto& d : dets) {
    const std::string col = color_hex(class_color(d.class_id));
    std::snprintf(buf, sizeof buf,
                  "  <rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"%s\" "
                  "stroke-width=\"1\"/>\n",
                  d.box.x_min, d.box.y_min, d.box.width(), d.box.height(), col.c_str());
    s += buf;
    const double ty = d.box.y_min >= 12.0 ? d.box.y_min - 3.0 : d.box.y_min + 11.0;
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%.2f\" y=\"%.2f\" font-family=\"monospace\" font-size=\"10\" fill=\"%s\">%s</text>\n",
                  d.box.x_min, ty, col.c_str(), detection_label(d).c_str());
    s += buf;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace utd
