#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "utd/box.hpp"
#include "utd/error.hpp"
#include "utd/rng.hpp"

namespace utd {

inline constexpr std::size_t kNumAnchorAreas = 4;
inline constexpr std::size_t kNumAnchorRatios = 3;
inline constexpr std::size_t kAnchorsPerCell = kNumAnchorAreas * kNumAnchorRatios;

/// Four base areas (px^2) crossed with three aspect ratios (w/h).
struct AnchorSpec {
  std::array<double, kNumAnchorAreas> base_areas{1024.0, 4096.0, 9216.0, 16384.0};
  std::array<double, kNumAnchorRatios> aspect_ratios{0.5, 1.0, 2.0};

  void validate() const {
    for (std::size_t i = 0; i < base_areas.size(); ++i) {
      if (!(base_areas[i] > 0.0) || !std::isfinite(base_areas[i]))
        throw ConfigError("anchor areas must be positive and finite");
      if (i > 0 && !(base_areas[i] > base_areas[i - 1]))
        throw ConfigError("anchor areas must be strictly increasing");
    }
    for (std::size_t i = 0; i < aspect_ratios.size(); ++i) {
      if (!(aspect_ratios[i] > 0.0) || !std::isfinite(aspect_ratios[i]))
        throw ConfigError("anchor aspect ratios must be positive and finite");
      if (i > 0 && !(aspect_ratios[i] > aspect_ratios[i - 1]))
        throw ConfigError("anchor aspect ratios must be strictly increasing");
    }
  }
};

struct AnchorShape {
  double width = 0.0;
  double height = 0.0;
};

/// Area-major order: shape index = area_index * 3 + ratio_index.
inline std::array<AnchorShape, kAnchorsPerCell> anchor_shapes(const AnchorSpec& spec) {
  spec.validate();
  std::array<AnchorShape, kAnchorsPerCell> out{};
  std::size_t n = 0;
  for (double a : spec.base_areas) {
    for (double r : spec.aspect_ratios) out[n++] = {std::sqrt(a * r), std::sqrt(a / r)};
  }
  return out;
}

/// Anchors tiled over a stride-spaced grid, 12 per cell, never clipped.
struct AnchorGrid {
  int stride = 0;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<Box> anchors;  // index = ((row * grid_w) + col) * 12 + shape

  std::size_t size() const { return anchors.size(); }
};

inline AnchorGrid generate_grid(const AnchorSpec& spec, int image_w, int image_h, int stride) {
  if (image_w <= 0 || image_h <= 0) throw InputError("generate_grid: image size must be positive");
  if (stride <= 0) throw ConfigError("generate_grid: stride must be positive");
  const auto shapes = anchor_shapes(spec);
  AnchorGrid grid;
  grid.stride = stride;
  grid.grid_w = (image_w + stride - 1) / stride;
  grid.grid_h = (image_h + stride - 1) / stride;
  grid.anchors.reserve(static_cast<std::size_t>(grid.grid_w) * grid.grid_h * kAnchorsPerCell);
  for (int j = 0; j < grid.grid_h; ++j) {
    for (int i = 0; i < grid.grid_w; ++i) {
      const double cx = (i + 0.5) * stride;
      const double cy = (j + 0.5) * stride;
      for (const auto& s : shapes) grid.anchors.push_back(Box::from_center(cx, cy, s.width, s.height));
    }
  }
  return grid;
}

struct AnchorLabel {
  enum class Kind { negative, ignore, positive };
  Kind kind = Kind::negative;
  int gt_index = -1;  // set for positives only

  bool operator==(const AnchorLabel&) const = default;
};

/// Max-IoU assignment with a force-match so that every ground-truth box owns
/// at least one positive anchor. A gt whose best anchor is already
/// force-matched to an earlier gt takes its next-best free anchor.
inline std::vector<AnchorLabel> assign_targets(const AnchorGrid& grid, const std::vector<Box>& gts,
                                               double pos_thresh, double neg_thresh) {
  if (!(neg_thresh >= 0.0 && neg_thresh <= pos_thresh && pos_thresh <= 1.0))
    throw ConfigError("assign_targets: need 0 <= neg_thresh <= pos_thresh <= 1");

  const std::size_t n = grid.anchors.size();
  std::vector<AnchorLabel> labels(n);
  if (gts.empty()) return labels;

  // IoU matrix, row per gt.
  std::vector<double> ious(gts.size() * n);
  for (std::size_t g = 0; g < gts.size(); ++g)
    for (std::size_t a = 0; a < n; ++a) ious[g * n + a] = iou(grid.anchors[a], gts[g]);

  for (std::size_t a = 0; a < n; ++a) {
    double best = -1.0;
    int best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (ious[g * n + a] > best) {
        best = ious[g * n + a];
        best_g = static_cast<int>(g);
      }
    }
    if (best >= pos_thresh) {
      labels[a] = {AnchorLabel::Kind::positive, best_g};
    } else if (best < neg_thresh) {
      labels[a] = {AnchorLabel::Kind::negative, -1};
    } else {
      labels[a] = {AnchorLabel::Kind::ignore, -1};
    }
  }

  std::vector<bool> forced(n, false);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    double best = -1.0;
    std::size_t best_a = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (forced[a]) continue;
      if (ious[g * n + a] > best) {
        best = ious[g * n + a];
        best_a = a;
      }
    }
    if (best_a == n) continue;  // more gts than anchors
    forced[best_a] = true;
    labels[best_a] = {AnchorLabel::Kind::positive, static_cast<int>(g)};
  }
  return labels;
}

namespace detail {

inline double quantize_offset(double t) {
  constexpr double q = 0x1.0p-24;
  return std::floor(t / q) * q;
}

}  // namespace detail

/// Boxes with gt's width and height whose centers are uniform over the frame
/// [0, frame_w] x [0, frame_h] minus gt's interior. Boxes may overhang the
/// frame. Each sample is gt translated by an offset on a 2^-24 pixel lattice,
/// so dyadic gt coordinates reproduce gt's size exactly.
inline std::vector<Box> sample_background_boxes(const Box& gt, double frame_w, double frame_h,
                                                int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("sample_background_boxes: k must be >= 1");
  if (!gt.non_degenerate()) throw InputError("sample_background_boxes: gt must be non-degenerate");
  if (!(frame_w > 0.0) || !(frame_h > 0.0))
    throw InputError("sample_background_boxes: frame must have positive size");

  const double gx1 = std::clamp(gt.x_min, 0.0, frame_w);
  const double gx2 = std::clamp(gt.x_max, 0.0, frame_w);
  const double gy1 = std::clamp(gt.y_min, 0.0, frame_h);
  const double gy2 = std::clamp(gt.y_max, 0.0, frame_h);

  // Frame minus gt interior as four disjoint rectangles.
  const std::array<Box, 4> parts{Box{0.0, 0.0, frame_w, gy1}, Box{0.0, gy2, frame_w, frame_h},
                                 Box{0.0, gy1, gx1, gy2}, Box{gx2, gy1, frame_w, gy2}};
  std::array<double, 4> cumulative{};
  double total = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    total += area(parts[i]);
    cumulative[i] = total;
  }
  if (!(total > 0.0))
    throw InputError("sample_background_boxes: frame leaves no room outside gt for a center");

  auto inside_interior = [&](const Box& b) {
    const double cx = b.center_x();
    const double cy = b.center_y();
    return cx > gt.x_min && cx < gt.x_max && cy > gt.y_min && cy < gt.y_max;
  };

  SeededRng rng(seed);
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(k));
  while (out.size() < static_cast<std::size_t>(k)) {
    const double pick = rng.uniform() * total;
    std::size_t part = parts.size();
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (area(parts[i]) > 0.0) {
        part = i;
        if (pick < cumulative[i]) break;
      }
    }
    const Box& r = parts[part];
    const double cx = rng.uniform(r.x_min, r.x_max);
    const double cy = rng.uniform(r.y_min, r.y_max);
    const double tx = detail::quantize_offset(cx - gt.center_x());
    const double ty = detail::quantize_offset(cy - gt.center_y());
    const Box b{gt.x_min + tx, gt.y_min + ty, gt.x_max + tx, gt.y_max + ty};
    if (inside_interior(b)) continue;  // lattice snap landed on the boundary's inner side
    out.push_back(b);
  }
  return out;
}

}  // namespace utd
