// Scores a predicted box against its ground truth with each overlap measure,
// then takes a few gradient steps on the combined regression loss.

#include <cstdio>

#include "utd/losses.hpp"

int main() {
  using namespace utd;
  const Box gt{120, 80, 220, 150};
  Box pred{100, 95, 190, 175};

  std::printf("iou %.4f  giou %.4f  diou %.4f  ciou %.4f\n", iou(pred, gt), giou(pred, gt), diou(pred, gt),
              ciou(pred, gt));

  LossConfig cfg;
  cfg.frame_w = 640;
  cfg.frame_h = 480;
  cfg.rng_seed = 1;
  for (int step = 0; step <= 50; ++step) {
    const auto loss = combined_loss(pred, gt, cfg);
    if (step % 10 == 0)
      std::printf("step %2d  loss %.4f (ciou %.4f, raiou %.4f)  pred [%.1f %.1f %.1f %.1f]\n", step, loss.total,
                  loss.l_ciou, loss.l_raiou, pred.x_min, pred.y_min, pred.x_max, pred.y_max);
    const auto g = combined_loss_gradient(pred, gt, cfg);
    const double lr = 200.0;
    pred = {pred.x_min - lr * g[0], pred.y_min - lr * g[1], pred.x_max - lr * g[2], pred.y_max - lr * g[3]};
  }
  return 0;
}
