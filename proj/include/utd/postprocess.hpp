#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "utd/box.hpp"
#include "utd/error.hpp"

namespace utd {

struct Detection {
  Box box;
  double score = 0.0;
  int class_id = 0;

  bool operator==(const Detection&) const = default;
};

struct RefineConfig {
  double wbf_iou_thresh = 0.55;
  double nms_diou_thresh = 0.5;
  double score_floor = 0.001;
  int max_iterations = 3000;  // refinement usually settles within a handful
  double stability_epsilon = 1e-3;

  void validate() const {
    if (!(wbf_iou_thresh > 0.0 && wbf_iou_thresh < 1.0))
      throw ConfigError("refine.wbf_iou_thresh must lie in (0, 1)");
    if (!(nms_diou_thresh > 0.0 && nms_diou_thresh < 1.0))
      throw ConfigError("refine.nms_diou_thresh must lie in (0, 1)");
    if (!(score_floor >= 0.0 && score_floor < 1.0)) throw ConfigError("refine.score_floor must lie in [0, 1)");
    if (max_iterations < 1) throw ConfigError("refine.max_iterations must be >= 1");
    if (!(stability_epsilon > 0.0)) throw ConfigError("refine.stability_epsilon must be positive");
  }
};

/// Indices ordered by descending score; equal scores keep input order.
inline std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

/// Greedy DIoU suppression within each class. Output is in descending score order.
inline std::vector<Detection> diou_nms(const std::vector<Detection>& dets, double thresh) {
  if (!(thresh > 0.0 && thresh < 1.0)) throw ConfigError("diou_nms: threshold must lie in (0, 1)");
  const auto order = score_order(dets);
  std::vector<bool> removed(dets.size(), false);
  std::vector<Detection> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (removed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (removed[j] || dets[j].class_id != dets[i].class_id) continue;
      if (diou(dets[i].box, dets[j].box) > thresh) removed[j] = true;
    }
  }
  return kept;
}

namespace detail {

struct WbfCluster {
  int class_id = 0;
  std::vector<Detection> members;
  Box fused;

  void refresh() {
    if (members.size() == 1) {
      fused = members.front().box;
      return;
    }
    double wsum = 0.0;
    for (const auto& m : members) wsum += m.score;
    const bool uniform = wsum <= 0.0;
    const double denom = uniform ? static_cast<double>(members.size()) : wsum;
    Box acc{0.0, 0.0, 0.0, 0.0};
    for (const auto& m : members) {
      const double w = uniform ? 1.0 : m.score;
      acc.x_min += w * m.box.x_min;
      acc.y_min += w * m.box.y_min;
      acc.x_max += w * m.box.x_max;
      acc.y_max += w * m.box.y_max;
    }
    fused = {acc.x_min / denom, acc.y_min / denom, acc.x_max / denom, acc.y_max / denom};
    // Keep the weighted mean inside the member envelope despite rounding.
    Box lo = members.front().box, hi = members.front().box;
    for (const auto& m : members) {
      lo = {std::min(lo.x_min, m.box.x_min), std::min(lo.y_min, m.box.y_min),
            std::min(lo.x_max, m.box.x_max), std::min(lo.y_max, m.box.y_max)};
      hi = {std::max(hi.x_min, m.box.x_min), std::max(hi.y_min, m.box.y_min),
            std::max(hi.x_max, m.box.x_max), std::max(hi.y_max, m.box.y_max)};
    }
    fused = {std::clamp(fused.x_min, lo.x_min, hi.x_min), std::clamp(fused.y_min, lo.y_min, hi.y_min),
             std::clamp(fused.x_max, lo.x_max, hi.x_max), std::clamp(fused.y_max, lo.y_max, hi.y_max)};
  }

  double score(std::size_t num_lists) const {
    double s = 0.0;
    for (const auto& m : members) s += m.score;
    const double t = static_cast<double>(members.size());
    const double m = static_cast<double>(num_lists);
    return (s / t) * (std::min(t, m) / m);
  }
};

}  // namespace detail

/// Weighted boxes fusion over M detection lists.
///
/// Detections are pooled and visited by descending score. Each joins the
/// same-class cluster whose current fused box it overlaps most, provided that
/// IoU exceeds iou_thresh; otherwise it seeds a new cluster. Fused boxes are
/// score-weighted coordinate means; fused scores are the mean member score
/// times min(T, M) / M for a cluster of T members. Clusters whose fused boxes
/// still overlap above the threshold after the pass are merged, so the output
/// is a fixed point of a second application.
struct WbfFusion {
  Detection fused;
  std::vector<Detection> members;
};

/// Fused detections with their members, by descending fused score.
inline std::vector<WbfFusion> wbf_clusters(const std::vector<std::vector<Detection>>& det_lists,
                                           double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) throw ConfigError("wbf: threshold must lie in (0, 1)");
  if (det_lists.empty()) throw ConfigError("wbf: need at least one detection list");
  std::vector<Detection> pool;
  for (const auto& l : det_lists) pool.insert(pool.end(), l.begin(), l.end());

  std::vector<detail::WbfCluster> clusters;
  for (std::size_t idx : score_order(pool)) {
    const Detection& d = pool[idx];
    double best = iou_thresh;
    std::size_t best_c = clusters.size();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].class_id != d.class_id) continue;
      const double v = iou(clusters[c].fused, d.box);
      if (v > best) {
        best = v;
        best_c = c;
      }
    }
    if (best_c == clusters.size()) {
      clusters.push_back({d.class_id, {d}, d.box});
    } else {
      clusters[best_c].members.push_back(d);
      clusters[best_c].refresh();
    }
  }

  // Consolidation: merge the most-overlapping same-class pair until none
  // exceeds the threshold.
  for (;;) {
    double best = iou_thresh;
    bool found = false;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        if (clusters[i].class_id != clusters[j].class_id) continue;
        const double v = iou(clusters[i].fused, clusters[j].fused);
        if (v > best) {
          best = v;
          found = true;
          bi = i;
          bj = j;
        }
      }
    if (!found) break;
    auto& keep = clusters[bi];
    keep.members.insert(keep.members.end(), clusters[bj].members.begin(), clusters[bj].members.end());
    keep.refresh();
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }

  std::vector<WbfFusion> out;
  out.reserve(clusters.size());
  for (auto& c : clusters)
    out.push_back({{c.fused, c.score(det_lists.size()), c.class_id}, std::move(c.members)});
  std::stable_sort(out.begin(), out.end(),
                   [](const WbfFusion& a, const WbfFusion& b) { return a.fused.score > b.fused.score; });
  return out;
}

/// Weighted boxes fusion; see wbf_clusters.
inline std::vector<Detection> wbf(const std::vector<std::vector<Detection>>& det_lists, double iou_thresh) {
  std::vector<Detection> out;
  for (auto& f : wbf_clusters(det_lists, iou_thresh)) out.push_back(f.fused);
  return out;
}

/// True when both sets have equal size and a greedy max-IoU pairing moves no
/// coordinate or score by epsilon or more.
inline bool detections_stable(const std::vector<Detection>& prev, const std::vector<Detection>& cur,
                              double epsilon) {
  if (prev.size() != cur.size()) return false;
  struct Pair {
    double iou;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < prev.size(); ++i)
    for (std::size_t j = 0; j < cur.size(); ++j)
      if (prev[i].class_id == cur[j].class_id) pairs.push_back({iou(prev[i].box, cur[j].box), i, j});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
  std::vector<bool> used_i(prev.size(), false), used_j(cur.size(), false);
  std::size_t matched = 0;
  for (const auto& p : pairs) {
    if (used_i[p.i] || used_j[p.j]) continue;
    used_i[p.i] = used_j[p.j] = true;
    ++matched;
    const Box& a = prev[p.i].box;
    const Box& b = cur[p.j].box;
    const double drift = std::max({std::abs(a.x_min - b.x_min), std::abs(a.y_min - b.y_min),
                                   std::abs(a.x_max - b.x_max), std::abs(a.y_max - b.y_max)});
    if (!(drift < epsilon) || !(std::abs(prev[p.i].score - cur[p.j].score) < epsilon)) return false;
  }
  return matched == cur.size();
}

struct RefineResult {
  std::vector<Detection> detections;
  int iterations = 0;
  std::vector<std::size_t> cardinality;  // set size after each iteration
};

/// Repeats WBF -> DIoU-NMS -> score floor until two consecutive sets agree
/// or the iteration cap is hit.
inline RefineResult iterative_refine(const std::vector<Detection>& dets, const RefineConfig& cfg) {
  cfg.validate();
  RefineResult res;
  std::vector<Detection> prev = dets;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    std::vector<Detection> cur = wbf({prev}, cfg.wbf_iou_thresh);
    cur = diou_nms(cur, cfg.nms_diou_thresh);
    std::erase_if(cur, [&](const Detection& d) { return d.score < cfg.score_floor; });
    res.iterations = it;
    res.cardinality.push_back(cur.size());
    const bool stable = detections_stable(prev, cur, cfg.stability_epsilon);
    prev = std::move(cur);
    if (stable) break;
  }
  res.detections = std::move(prev);
  return res;
}

}  // namespace utd
