#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "utd/box.hpp"
#include "utd/error.hpp"
#include "utd/image.hpp"
#include "utd/rng.hpp"

namespace utd {

struct LabeledImage {
  Image image;
  std::vector<LabeledBox> boxes;

  /// Every box must be valid and touch the image rectangle.
  void validate() const {
    for (const auto& lb : boxes) {
      const Box& b = lb.box;
      if (!b.valid()) throw InputError("LabeledImage: invalid box");
      if (b.x_max < 0.0 || b.y_max < 0.0 || b.x_min > image.w || b.y_min > image.h)
        throw InputError("LabeledImage: box lies outside the image");
    }
  }
};

// ---------------------------------------------------------------------------
// Noise filtering

/// Per-channel median over a window x window neighbourhood, edges replicated.
inline Image denoise(const Image& img, int window) {
  if (window < 3 || window % 2 == 0) throw ConfigError("denoise: window must be odd and >= 3");
  const int r = window / 2;
  Image out = img;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(window) * window);
  const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        std::size_t n = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = std::clamp(y + dy, 0, img.h - 1);
          for (int dx = -r; dx <= r; ++dx) buf[n++] = img.at(std::clamp(x + dx, 0, img.w - 1), sy, c);
        }
        std::nth_element(buf.begin(), mid, buf.end());
        out.at(x, y, c) = *mid;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Water / reef boundary segmentation

inline Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.w, img.h, 1);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const double l = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(l), 0L, 255L));
    }
  return out;
}

/// Threshold t maximizing between-class variance, classes {< t} and {>= t}.
/// Ties resolve to the smallest t. A single-level image returns that level.
inline int otsu_threshold(const Image& gray) {
  if (gray.channels != 1) throw InputError("otsu_threshold: expects a single-channel image");
  std::array<std::uint64_t, 256> hist{};
  for (auto p : gray.pixels) ++hist[p];
  const double total = static_cast<double>(gray.pixels.size());
  std::array<double, 256> prob{};
  double mean_total = 0.0;
  for (int i = 0; i < 256; ++i) {
    prob[i] = static_cast<double>(hist[i]) / total;
    mean_total += i * prob[i];
  }
  double w0 = 0.0, m0 = 0.0;  // cumulative weight and first moment below t
  double best = -1.0;
  int best_t = -1;
  for (int t = 1; t < 256; ++t) {
    w0 += prob[t - 1];
    m0 += (t - 1) * prob[t - 1];
    const double w1 = 1.0 - w0;
    if (w0 <= 0.0 || w1 <= 1e-15) continue;
    const double num = mean_total * w0 - m0;
    const double var = num * num / (w0 * w1);
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  if (best_t < 0) {
    for (int i = 0; i < 256; ++i)
      if (hist[i]) return i;
  }
  return best_t;
}

/// Semi-automatic threshold: the manual value when given, otherwise the
/// between-class-variance optimum of the gray histogram.
inline int water_boundary_threshold(const Image& img, std::optional<int> manual_threshold = {}) {
  if (manual_threshold) {
    if (*manual_threshold < 0 || *manual_threshold > 255)
      throw ConfigError("segmentation threshold must lie in [0, 255]");
    return *manual_threshold;
  }
  return otsu_threshold(to_gray(img));
}

/// Binary mask (1 = foreground, gray >= threshold).
inline Image segment_water_boundary(const Image& img, std::optional<int> manual_threshold = {}) {
  const Image gray = to_gray(img);
  const int t = manual_threshold ? water_boundary_threshold(img, manual_threshold) : otsu_threshold(gray);
  Image mask(gray.w, gray.h, 1);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) mask.pixels[i] = gray.pixels[i] >= t ? 1 : 0;
  return mask;
}

// ---------------------------------------------------------------------------
// Letterbox scaling

/// Bilinear resampling with half-pixel centres and clamped edges.
inline Image resize_bilinear(const Image& img, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0) throw InputError("resize: target size must be positive");
  if (new_w == img.w && new_h == img.h) return img;
  Image out(new_w, new_h, img.channels);
  const double sx = static_cast<double>(img.w) / new_w;
  const double sy = static_cast<double>(img.h) / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < new_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double tx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - tx) + img.at(x1, y0, c) * tx;
        const double bot = img.at(x0, y1, c) * (1.0 - tx) + img.at(x1, y1, c) * tx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(top * (1.0 - ty) + bot * ty));
      }
    }
  }
  return out;
}

/// Maps source coordinates into the padded target: p' = p * scale + pad.
struct LetterboxTransform {
  double scale = 1.0;
  int pad_left = 0;
  int pad_top = 0;
  int resized_w = 0;
  int resized_h = 0;

  Box forward(const Box& b) const {
    return {b.x_min * scale + pad_left, b.y_min * scale + pad_top, b.x_max * scale + pad_left,
            b.y_max * scale + pad_top};
  }
  Box inverse(const Box& b) const {
    return {(b.x_min - pad_left) / scale, (b.y_min - pad_top) / scale, (b.x_max - pad_left) / scale,
            (b.y_max - pad_top) / scale};
  }
};

inline LetterboxTransform letterbox_transform(int src_w, int src_h, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0) throw ConfigError("letterbox: target size must be positive");
  if (src_w <= 0 || src_h <= 0) throw InputError("letterbox: source size must be positive");
  LetterboxTransform t;
  t.scale = std::min(static_cast<double>(target_w) / src_w, static_cast<double>(target_h) / src_h);
  t.resized_w = std::clamp(static_cast<int>(std::lround(src_w * t.scale)), 1, target_w);
  t.resized_h = std::clamp(static_cast<int>(std::lround(src_h * t.scale)), 1, target_h);
  t.pad_left = (target_w - t.resized_w) / 2;
  t.pad_top = (target_h - t.resized_h) / 2;
  return t;
}

inline Box clip_box(const Box& b, double x0, double y0, double x1, double y1) {
  return {std::clamp(b.x_min, x0, x1), std::clamp(b.y_min, y0, y1), std::clamp(b.x_max, x0, x1),
          std::clamp(b.y_max, y0, y1)};
}

struct LetterboxResult {
  LabeledImage item;
  LetterboxTransform transform;
};

/// Aspect-preserving resize, centred on a pad_value canvas. Boxes follow the
/// same transform and are clipped to the target.
inline LetterboxResult letterbox(const LabeledImage& item, int target_w, int target_h,
                                 std::uint8_t pad_value = 114) {
  const auto t = letterbox_transform(item.image.w, item.image.h, target_w, target_h);
  const Image resized = resize_bilinear(item.image, t.resized_w, t.resized_h);
  LetterboxResult res;
  res.transform = t;
  res.item.image = Image(target_w, target_h, item.image.channels, pad_value);
  for (int y = 0; y < t.resized_h; ++y)
    for (int x = 0; x < t.resized_w; ++x)
      for (int c = 0; c < resized.channels; ++c)
        res.item.image.at(x + t.pad_left, y + t.pad_top, c) = resized.at(x, y, c);
  for (const auto& lb : item.boxes)
    res.item.boxes.push_back({clip_box(t.forward(lb.box), 0.0, 0.0, target_w, target_h), lb.class_id});
  return res;
}

// ---------------------------------------------------------------------------
// Mosaic augmentation

inline constexpr double kMosaicMinRetained = 0.2;

/// Four-way composite split at (center_x, center_y): items go to the top-left,
/// top-right, bottom-left and bottom-right quadrants in that order.
inline LabeledImage mosaic_at(const std::vector<LabeledImage>& items, int canvas_w, int canvas_h,
                              int center_x, int center_y, std::uint8_t pad_value = 114) {
  if (items.size() != 4) throw InputError("mosaic: exactly 4 images are required");
  if (canvas_w < 2 || canvas_h < 2) throw ConfigError("mosaic: canvas must be at least 2x2");
  if (center_x < 1 || center_x > canvas_w - 1 || center_y < 1 || center_y > canvas_h - 1)
    throw ConfigError("mosaic: center must leave every quadrant non-empty");
  int channels = 1;
  for (const auto& it : items) channels = std::max(channels, it.image.channels);

  LabeledImage out;
  out.image = Image(canvas_w, canvas_h, channels, pad_value);
  const std::array<std::array<int, 4>, 4> quads{{{0, 0, center_x, center_y},
                                                 {center_x, 0, canvas_w, center_y},
                                                 {0, center_y, center_x, canvas_h},
                                                 {center_x, center_y, canvas_w, canvas_h}}};
  for (std::size_t q = 0; q < 4; ++q) {
    const auto [qx0, qy0, qx1, qy1] = quads[q];
    const int qw = qx1 - qx0;
    const int qh = qy1 - qy0;
    const LabeledImage& src = items[q];
    const auto t = letterbox_transform(src.image.w, src.image.h, qw, qh);
    const LetterboxResult lb = letterbox({src.image, {}}, qw, qh, pad_value);
    for (int y = 0; y < qh; ++y)
      for (int x = 0; x < qw; ++x)
        for (int c = 0; c < channels; ++c)
          out.image.at(qx0 + x, qy0 + y, c) = lb.item.image.at(x, y, lb.item.image.channels == 1 ? 0 : c);
    for (const auto& b : src.boxes) {
      Box moved = t.forward(b.box);
      moved = {moved.x_min + qx0, moved.y_min + qy0, moved.x_max + qx0, moved.y_max + qy0};
      const Box clipped = clip_box(moved, qx0, qy0, qx1, qy1);
      const double full = area(moved);
      const double kept = area(clipped);
      if (full <= 0.0 || kept <= 0.0 || kept < kMosaicMinRetained * full) continue;
      out.boxes.push_back({clipped, b.class_id});
    }
  }
  return out;
}

/// Seeded split point drawn from the central half of the canvas.
inline LabeledImage mosaic(const std::vector<LabeledImage>& items, int canvas_w, int canvas_h,
                           std::uint64_t seed, std::uint8_t pad_value = 114) {
  if (items.size() != 4) throw InputError("mosaic: exactly 4 images are required");
  if (canvas_w < 2 || canvas_h < 2) throw ConfigError("mosaic: canvas must be at least 2x2");
  SeededRng rng(seed);
  const auto cx = static_cast<int>(rng.uniform_int(canvas_w / 4, (3 * canvas_w) / 4));
  const auto cy = static_cast<int>(rng.uniform_int(canvas_h / 4, (3 * canvas_h) / 4));
  return mosaic_at(items, canvas_w, canvas_h, std::clamp(cx, 1, canvas_w - 1),
                   std::clamp(cy, 1, canvas_h - 1), pad_value);
}

}  // namespace utd
