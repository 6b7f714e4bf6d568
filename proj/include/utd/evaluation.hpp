#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <set>
#include <vector>

#include "utd/box.hpp"
#include "utd/postprocess.hpp"

namespace utd {

inline constexpr int kNumIouThresholds = 10;
inline constexpr int kNumRecallPoints = 101;
inline constexpr double kSmallArea = 32.0 * 32.0;
inline constexpr double kLargeArea = 96.0 * 96.0;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::array<double, kNumIouThresholds> iou_thresholds() {
  std::array<double, kNumIouThresholds> t{};
  for (int i = 0; i < kNumIouThresholds; ++i) t[i] = (50 + 5 * i) / 100.0;
  return t;
}

/// Half-open area interval [lo, hi) in px^2.
struct AreaRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double a) const { return a >= lo && a < hi; }

  static AreaRange all() { return {}; }
  static AreaRange small() { return {0.0, kSmallArea}; }
  static AreaRange medium() { return {kSmallArea, kLargeArea}; }
  static AreaRange large() { return {kLargeArea, std::numeric_limits<double>::infinity()}; }
};

struct MatchResult {
  std::vector<bool> pred_tp;     // per prediction, input order
  std::vector<int> pred_gt;      // matched gt index or -1
  std::vector<bool> gt_matched;  // per gt
};

/// Greedy matching: predictions in descending score order each claim the
/// highest-IoU still-unmatched gt with IoU >= iou_thresh.
inline MatchResult match(const std::vector<Detection>& preds, const std::vector<Box>& gts,
                         double iou_thresh) {
  MatchResult r;
  r.pred_tp.assign(preds.size(), false);
  r.pred_gt.assign(preds.size(), -1);
  r.gt_matched.assign(gts.size(), false);
  for (std::size_t p : score_order(preds)) {
    double best = iou_thresh;
    int best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_matched[g]) continue;
      const double v = iou(preds[p].box, gts[g]);
      if (v >= best && (best_g < 0 || v > best)) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      r.gt_matched[static_cast<std::size_t>(best_g)] = true;
      r.pred_tp[p] = true;
      r.pred_gt[p] = best_g;
    }
  }
  return r;
}

/// 101-point interpolated AP from per-prediction TP flags and scores.
/// With no ground truth: 1 if there are also no predictions, else 0.
inline double average_precision(const std::vector<bool>& tp, const std::vector<double>& scores,
                                std::size_t total_gt) {
  if (tp.size() != scores.size()) throw InputError("average_precision: flags and scores differ in length");
  if (total_gt == 0) return tp.empty() ? 1.0 : 0.0;
  if (tp.empty()) return 0.0;
  std::vector<std::size_t> order(tp.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> precision(tp.size()), recall(tp.size());
  double ctp = 0.0, cfp = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (tp[order[k]]) {
      ctp += 1.0;
    } else {
      cfp += 1.0;
    }
    precision[k] = ctp / (ctp + cfp);
    recall[k] = ctp / static_cast<double>(total_gt);
  }
  for (std::size_t k = precision.size() - 1; k > 0; --k)
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0.0;
  for (int i = 0; i < kNumRecallPoints; ++i) {
    const double r = i / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kNumRecallPoints;
}

/// Predictions and annotations for one image.
struct ImageEval {
  std::vector<Detection> preds;
  std::vector<LabeledBox> gts;
};

namespace detail {

inline std::vector<Detection> top_k_of_class(const std::vector<Detection>& preds, int cls, int k) {
  std::vector<Detection> out;
  for (std::size_t i : score_order(preds)) {
    if (preds[i].class_id != cls) continue;
    if (static_cast<int>(out.size()) >= k) break;
    out.push_back(preds[i]);
  }
  return out;
}

inline std::vector<Box> gts_of_class(const std::vector<LabeledBox>& gts, int cls) {
  std::vector<Box> out;
  for (const auto& g : gts)
    if (g.class_id == cls) out.push_back(g.box);
  return out;
}

inline std::set<int> gt_classes(const std::vector<ImageEval>& images) {
  std::set<int> cls;
  for (const auto& im : images)
    for (const auto& g : im.gts) cls.insert(g.class_id);
  return cls;
}

}  // namespace detail

/// Recall of gts whose area lies in `range`, using at most max_dets
/// predictions per image and class, averaged over the ten IoU thresholds and
/// then over classes. Returns -1 when no gt falls in the range.
inline double average_recall(const std::vector<ImageEval>& images, int max_dets, AreaRange range) {
  const auto thresholds = iou_thresholds();
  double class_sum = 0.0;
  int class_count = 0;
  for (int cls : detail::gt_classes(images)) {
    std::size_t in_range = 0;
    for (const auto& im : images)
      for (const auto& g : im.gts)
        if (g.class_id == cls && range.contains(area(g.box))) ++in_range;
    if (in_range == 0) continue;
    double thr_sum = 0.0;
    for (double t : thresholds) {
      std::size_t hit = 0;
      for (const auto& im : images) {
        const auto gts = detail::gts_of_class(im.gts, cls);
        if (gts.empty()) continue;
        const auto m = match(detail::top_k_of_class(im.preds, cls, max_dets), gts, t);
        for (std::size_t g = 0; g < gts.size(); ++g)
          if (m.gt_matched[g] && range.contains(area(gts[g]))) ++hit;
      }
      thr_sum += static_cast<double>(hit) / static_cast<double>(in_range);
    }
    class_sum += thr_sum / kNumIouThresholds;
    ++class_count;
  }
  return class_count == 0 ? -1.0 : class_sum / class_count;
}

/// The seven reported columns plus AP at each IoU threshold.
struct EvalReport {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar = 0.0;
  double ar_small = 0.0;
  double ar_medium = 0.0;
  double ar_large = 0.0;
  std::array<double, kNumIouThresholds> per_threshold_ap{};
};

/// Dataset-level AP at one IoU threshold, averaged over gt classes.
inline double dataset_ap(const std::vector<ImageEval>& images, double iou_thresh, int max_dets) {
  auto classes = detail::gt_classes(images);
  if (classes.empty()) {
    std::size_t n = 0;
    for (const auto& im : images) n += im.preds.size();
    return n == 0 ? 1.0 : 0.0;
  }
  double sum = 0.0;
  for (int cls : classes) {
    std::vector<bool> tp;
    std::vector<double> scores;
    std::size_t total_gt = 0;
    for (const auto& im : images) {
      const auto gts = detail::gts_of_class(im.gts, cls);
      total_gt += gts.size();
      const auto preds = detail::top_k_of_class(im.preds, cls, max_dets);
      const auto m = match(preds, gts, iou_thresh);
      for (std::size_t p = 0; p < preds.size(); ++p) {
        tp.push_back(m.pred_tp[p]);
        scores.push_back(preds[p].score);
      }
    }
    sum += average_precision(tp, scores, total_gt);
  }
  return sum / static_cast<double>(classes.size());
}

inline EvalReport evaluate_images(const std::vector<ImageEval>& images, int max_dets = 100) {
  EvalReport r;
  const auto thresholds = iou_thresholds();
  double sum = 0.0;
  for (int i = 0; i < kNumIouThresholds; ++i) {
    r.per_threshold_ap[i] = dataset_ap(images, thresholds[i], max_dets);
    sum += r.per_threshold_ap[i];
  }
  r.ap = sum / kNumIouThresholds;
  r.ap50 = r.per_threshold_ap[0];
  r.ap75 = r.per_threshold_ap[5];
  r.ar = average_recall(images, max_dets, AreaRange::all());
  r.ar_small = average_recall(images, max_dets, AreaRange::small());
  r.ar_medium = average_recall(images, max_dets, AreaRange::medium());
  r.ar_large = average_recall(images, max_dets, AreaRange::large());
  return r;
}

}  // namespace utd
