#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>

#include "utd/error.hpp"

namespace utd {

/// Axis-aligned rectangle in continuous pixel coordinates (corner form).
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  /// Center form (cx, cy, w, h) to corner form.
  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  /// Top-left plus size (COCO / CSV annotation style) to corner form.
  static Box from_xywh(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
  }

  /// Positive width and height.
  bool non_degenerate() const { return valid() && width() > 0.0 && height() > 0.0; }

  bool operator==(const Box&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << '(' << b.x_min << ',' << b.y_min << ',' << b.x_max << ',' << b.y_max << ')';
}

/// A box with a class label (ground-truth annotations, augmentation targets).
struct LabeledBox {
  Box box;
  int class_id = 0;

  bool operator==(const LabeledBox&) const = default;
};

/// d/d(x_min, y_min, x_max, y_max).
using BoxGradient = std::array<double, 4>;

inline double area(const Box& b) { return b.width() * b.height(); }

inline double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

/// Smallest box containing both arguments.
inline Box enclosing_box(const Box& a, const Box& b) {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min), std::max(a.x_max, b.x_max),
          std::max(a.y_max, b.y_max)};
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

inline double giou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  const double enclosing = area(enclosing_box(a, b));
  if (enclosing <= 0.0) return uni <= 0.0 ? 0.0 : inter / uni;
  const double base = uni <= 0.0 ? 0.0 : inter / uni;
  return base - (enclosing - uni) / enclosing;
}

/// Squared center distance over squared enclosing diagonal; 0 when the
/// centers coincide.
inline double center_distance_ratio(const Box& a, const Box& b) {
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  const double rho2 = dx * dx + dy * dy;
  if (rho2 == 0.0) return 0.0;
  const Box c = enclosing_box(a, b);
  const double c2 = c.width() * c.width() + c.height() * c.height();
  return rho2 / c2;
}

inline double diou(const Box& a, const Box& b) { return iou(a, b) - center_distance_ratio(a, b); }

/// Denominator offset for the aspect penalty v^2 / ((1 - IoU) + beta).
/// `standard_v` sets beta = v, which is the usual CIoU trade-off weight.
struct BetaMode {
  enum class Kind { standard_v, fixed };
  Kind kind = Kind::standard_v;
  double value = 0.0;

  static BetaMode standard() { return {}; }
  static BetaMode fixed_value(double beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta))
      throw ConfigError("beta must be a finite nonnegative value");
    return {Kind::fixed, beta};
  }
  bool operator==(const BetaMode&) const = default;
};

/// Aspect-ratio consistency term v = (4/pi^2)(atan(w_b/h_b) - atan(w_a/h_a))^2.
inline double aspect_consistency(const Box& a, const Box& b) {
  constexpr double k = 4.0 / (std::numbers::pi * std::numbers::pi);
  const double d = std::atan(b.width() / b.height()) - std::atan(a.width() / a.height());
  return k * d * d;
}

/// The three CIoU components, exposed for inspection.
struct CiouTerms {
  double iou = 0.0;
  double distance = 0.0;  // rho^2 / c^2
  double v = 0.0;
  double aspect = 0.0;  // v^2 / ((1 - iou) + beta)

  double value() const { return iou - distance - aspect; }
};

inline CiouTerms ciou_terms(const Box& a, const Box& b, BetaMode beta = {}) {
  if (!a.non_degenerate() || !b.non_degenerate())
    throw InputError("ciou requires boxes with positive width and height");
  CiouTerms t;
  t.iou = iou(a, b);
  t.distance = center_distance_ratio(a, b);
  t.v = aspect_consistency(a, b);
  if (t.v != 0.0) {
    const double b_off = beta.kind == BetaMode::Kind::standard_v ? t.v : beta.value;
    t.aspect = t.v * t.v / ((1.0 - t.iou) + b_off);
  }
  return t;
}

inline double ciou(const Box& a, const Box& b, BetaMode beta = {}) {
  return ciou_terms(a, b, beta).value();
}

/// Analytic gradient of ciou(pred, gt) with respect to pred's corners.
///
/// Where a min/max selector ties (pred edge coincides with a gt edge), pred's
/// edge is taken as the active one, i.e. the one-sided derivative from the
/// overlapping side. Exactly touching boxes (zero overlap along one axis,
/// positive along the other) have no usable derivative and are rejected.
inline BoxGradient ciou_gradient(const Box& pred, const Box& gt, BetaMode beta = {}) {
  if (!pred.non_degenerate() || !gt.non_degenerate())
    throw InputError("ciou_gradient requires boxes with positive width and height");

  const double w = pred.width();
  const double h = pred.height();

  // Intersection extents and their selectors.
  const bool ix1_pred = pred.x_min >= gt.x_min;
  const bool ix2_pred = pred.x_max <= gt.x_max;
  const bool iy1_pred = pred.y_min >= gt.y_min;
  const bool iy2_pred = pred.y_max <= gt.y_max;
  const double iw_raw = std::min(pred.x_max, gt.x_max) - std::max(pred.x_min, gt.x_min);
  const double ih_raw = std::min(pred.y_max, gt.y_max) - std::max(pred.y_min, gt.y_min);
  if ((iw_raw == 0.0 && ih_raw > 0.0) || (ih_raw == 0.0 && iw_raw > 0.0))
    throw InputError("ciou_gradient: boxes touch exactly along an edge; perturb the input");

  const double iw = std::max(iw_raw, 0.0);
  const double ih = std::max(ih_raw, 0.0);
  BoxGradient d_iw{}, d_ih{};
  if (iw_raw > 0.0) {
    d_iw[0] = ix1_pred ? -1.0 : 0.0;
    d_iw[2] = ix2_pred ? 1.0 : 0.0;
  }
  if (ih_raw > 0.0) {
    d_ih[1] = iy1_pred ? -1.0 : 0.0;
    d_ih[3] = iy2_pred ? 1.0 : 0.0;
  }

  const double inter = iw * ih;
  const double uni = w * h + area(gt) - inter;
  const double iou_v = inter / uni;
  const BoxGradient d_area{-h, -w, h, w};

  BoxGradient d_iou{};
  for (int i = 0; i < 4; ++i) {
    const double d_inter = d_iw[i] * ih + iw * d_ih[i];
    const double d_uni = d_area[i] - d_inter;
    d_iou[i] = (d_inter * uni - inter * d_uni) / (uni * uni);
  }

  // Center-distance term.
  const double dx = pred.center_x() - gt.center_x();
  const double dy = pred.center_y() - gt.center_y();
  const double rho2 = dx * dx + dy * dy;
  const double cw = std::max(pred.x_max, gt.x_max) - std::min(pred.x_min, gt.x_min);
  const double ch = std::max(pred.y_max, gt.y_max) - std::min(pred.y_min, gt.y_min);
  const double c2 = cw * cw + ch * ch;
  const BoxGradient d_rho2{dx, dy, dx, dy};
  // At a tie the enclosing edge belongs to gt, matching the inward side
  // chosen for the intersection above.
  const BoxGradient d_c2{pred.x_min < gt.x_min ? -2.0 * cw : 0.0,
                         pred.y_min < gt.y_min ? -2.0 * ch : 0.0,
                         pred.x_max > gt.x_max ? 2.0 * cw : 0.0,
                         pred.y_max > gt.y_max ? 2.0 * ch : 0.0};
  BoxGradient d_dist{};
  if (rho2 != 0.0) {
    for (int i = 0; i < 4; ++i) d_dist[i] = (d_rho2[i] * c2 - rho2 * d_c2[i]) / (c2 * c2);
  }

  // Aspect term. theta = atan(w / h); v = k (theta_gt - theta)^2.
  constexpr double k = 4.0 / (std::numbers::pi * std::numbers::pi);
  const double diff = std::atan(gt.width() / gt.height()) - std::atan(w / h);
  const double v = k * diff * diff;
  BoxGradient d_aspect{};
  if (v != 0.0) {
    const double r2 = w * w + h * h;
    const double dtheta_dw = h / r2;
    const double dtheta_dh = -w / r2;
    // d theta / d(x_min, y_min, x_max, y_max)
    const BoxGradient d_theta{-dtheta_dw, -dtheta_dh, dtheta_dw, dtheta_dh};
    const bool standard = beta.kind == BetaMode::Kind::standard_v;
    const double denom = (1.0 - iou_v) + (standard ? v : beta.value);
    for (int i = 0; i < 4; ++i) {
      const double dv = -2.0 * k * diff * d_theta[i];
      const double d_denom = -d_iou[i] + (standard ? dv : 0.0);
      d_aspect[i] = (2.0 * v * dv * denom - v * v * d_denom) / (denom * denom);
    }
  }

  BoxGradient g{};
  for (int i = 0; i < 4; ++i) g[i] = d_iou[i] - d_dist[i] - d_aspect[i];
  return g;
}

}  // namespace utd
