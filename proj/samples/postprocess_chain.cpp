// Runs a jittered detection cloud through NMS, box fusion and iterative
// refinement, printing what each stage leaves behind.

#include <cstdio>

#include "utd/pipeline.hpp"

int main() {
  using namespace utd;
  const auto cloud = synthetic_detection_cloud(64, 7, 2);
  const RefineConfig rc;

  const auto nms = diou_nms(cloud, rc.nms_diou_thresh);
  const auto fused = wbf({nms}, rc.wbf_iou_thresh);
  const auto refined = iterative_refine(fused, rc);

  std::printf("input %zu -> nms %zu -> wbf %zu -> refine %zu (%d iterations)\n", cloud.size(), nms.size(),
              fused.size(), refined.detections.size(), refined.iterations);
  for (const auto& d : refined.detections)
    std::printf("  class %d  score %.3f  [%.1f %.1f %.1f %.1f]\n", d.class_id, d.score, d.box.x_min, d.box.y_min,
                d.box.x_max, d.box.y_max);
  return 0;
}
