#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "utd/anchors.hpp"
#include "utd/box.hpp"
#include "utd/error.hpp"

namespace utd {

/// Box-regression loss settings. The frame is the image rectangle in which
/// background boxes for the random-anchor term are drawn.
struct LossConfig {
  double sigma = 0.5;
  int num_background_samples = 8;
  std::uint64_t rng_seed = 0;
  BetaMode beta = BetaMode::standard();
  double frame_w = 640.0;
  double frame_h = 640.0;

  void validate() const {
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError("loss.sigma must lie in [0, 1]");
    if (num_background_samples < 1) throw ConfigError("loss.num_background_samples must be >= 1");
    if (beta.kind == BetaMode::Kind::fixed && !(beta.value >= 0.0))
      throw ConfigError("loss.beta must be nonnegative");
    if (!(frame_w > 0.0) || !(frame_h > 0.0)) throw ConfigError("loss frame must have positive size");
  }
};

struct LossBreakdown {
  double l_ciou = 0.0;
  double l_raiou = 0.0;
  double l_cls = 0.0;
  double l_conf = 0.0;
  double total = 0.0;
};

inline double ciou_loss(const Box& pred, const Box& gt, BetaMode beta = {}) {
  return 1.0 - ciou(pred, gt, beta);
}

/// Background boxes used by raiou() for this gt and config.
inline std::vector<Box> raiou_backgrounds(const Box& gt, const LossConfig& cfg) {
  return sample_background_boxes(gt, cfg.frame_w, cfg.frame_h, cfg.num_background_samples,
                                 cfg.rng_seed);
}

/// Negated mean CIoU between pred and the sampled same-size background boxes.
inline double raiou(const Box& pred, const std::vector<Box>& backgrounds, BetaMode beta = {}) {
  if (backgrounds.empty()) throw ConfigError("raiou: no background samples");
  double sum = 0.0;
  for (const auto& b : backgrounds) sum += ciou(pred, b, beta);
  return -(sum / static_cast<double>(backgrounds.size()));
}

inline double raiou(const Box& pred, const Box& gt, const LossConfig& cfg) {
  cfg.validate();
  return raiou(pred, raiou_backgrounds(gt, cfg), cfg.beta);
}

/// Backgrounds are constants here; they depend on gt and the seed only.
inline BoxGradient raiou_gradient(const Box& pred, const std::vector<Box>& backgrounds,
                                  BetaMode beta = {}) {
  if (backgrounds.empty()) throw ConfigError("raiou: no background samples");
  BoxGradient g{};
  for (const auto& b : backgrounds) {
    const auto gb = ciou_gradient(pred, b, beta);
    for (int i = 0; i < 4; ++i) g[i] += gb[i];
  }
  const double scale = -1.0 / static_cast<double>(backgrounds.size());
  for (auto& x : g) x *= scale;
  return g;
}

namespace detail {

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

/// Mean binary cross-entropy on logits.
inline double cls_conf_loss(std::span<const double> logits, std::span<const double> targets) {
  if (logits.size() != targets.size())
    throw InputError("cls_conf_loss: logits and targets differ in length");
  if (logits.empty()) throw InputError("cls_conf_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double t = targets[i];
    if (t != 0.0 && t != 1.0) throw InputError("cls_conf_loss: targets must be 0 or 1");
    // -[t log s(x) + (1 - t) log(1 - s(x))] = softplus(x) - t x
    sum += detail::softplus(logits[i]) - t * logits[i];
  }
  return sum / static_cast<double>(logits.size());
}

/// Box-only objective: l_ciou + sigma * l_raiou, with cls/conf left at zero.
inline LossBreakdown combined_loss(const Box& pred, const Box& gt, const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.l_ciou = ciou_loss(pred, gt, cfg.beta);
  out.l_raiou = raiou(pred, raiou_backgrounds(gt, cfg), cfg.beta);
  out.total = out.l_ciou + cfg.sigma * out.l_raiou + out.l_cls + out.l_conf;
  return out;
}

/// Full objective including the baseline classification and objectness terms.
inline LossBreakdown combined_loss(const Box& pred, const Box& gt, const LossConfig& cfg,
                                   std::span<const double> cls_logits,
                                   std::span<const double> cls_targets,
                                   std::span<const double> conf_logits,
                                   std::span<const double> conf_targets) {
  LossBreakdown out = combined_loss(pred, gt, cfg);
  out.l_cls = cls_conf_loss(cls_logits, cls_targets);
  out.l_conf = cls_conf_loss(conf_logits, conf_targets);
  out.total = out.l_ciou + cfg.sigma * out.l_raiou + out.l_cls + out.l_conf;
  return out;
}

/// Gradient of combined_loss(pred, gt, cfg).total with respect to pred.
inline BoxGradient combined_loss_gradient(const Box& pred, const Box& gt, const LossConfig& cfg) {
  cfg.validate();
  const auto g_ciou = ciou_gradient(pred, gt, cfg.beta);
  BoxGradient g{};
  for (int i = 0; i < 4; ++i) g[i] = -g_ciou[i];
  if (cfg.sigma != 0.0) {
    const auto g_ra = raiou_gradient(pred, raiou_backgrounds(gt, cfg), cfg.beta);
    for (int i = 0; i < 4; ++i) g[i] += cfg.sigma * g_ra[i];
  }
  return g;
}

}  // namespace utd
