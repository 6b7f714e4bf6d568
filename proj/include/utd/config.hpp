#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "utd/anchors.hpp"
#include "utd/error.hpp"
#include "utd/hash.hpp"
#include "utd/io.hpp"
#include "utd/losses.hpp"
#include "utd/postprocess.hpp"

namespace utd {

inline constexpr int kConfigSchemaVersion = 1;

/// Per-stage switches. Any subset is valid.
struct StageFlags {
  bool denoise = false;
  bool segmentation = false;
  bool mosaic = false;
  bool se_demo = false;
  bool csp2_demo = false;
  bool dilated_demo = false;
  bool multiscale_anchors = false;
  bool nms = false;
  bool wbf = false;
  bool iterative_refinement = false;

  bool operator==(const StageFlags&) const = default;

  template <typename F>
  void for_each(F&& f) {
    f("denoise", denoise);
    f("segmentation", segmentation);
    f("mosaic", mosaic);
    f("se_demo", se_demo);
    f("csp2_demo", csp2_demo);
    f("dilated_demo", dilated_demo);
    f("multiscale_anchors", multiscale_anchors);
    f("nms", nms);
    f("wbf", wbf);
    f("iterative_refinement", iterative_refinement);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<StageFlags*>(this)->for_each([&](const char* n, bool& v) { f(n, static_cast<const bool&>(v)); });
  }
};

struct PipelinePaths {
  std::string annotations;
  std::string predictions;
  std::string images;
  std::string output_dir = "utd_out";
};

struct PipelineConfig {
  StageFlags flags;
  LossConfig loss;
  AnchorSpec anchors;
  double anchor_screen_iou = 0.2;
  RefineConfig refine;
  int denoise_window = 3;
  std::optional<int> segmentation_threshold;
  int mosaic_w = 640;
  int mosaic_h = 640;
  int max_dets = 100;
  AnnotationFormat annotation_format = AnnotationFormat::auto_detect;
  std::uint64_t seed = 0;
  PipelinePaths paths;

  void validate() const {
    loss.validate();
    anchors.validate();
    refine.validate();
    if (!(anchor_screen_iou >= 0.0 && anchor_screen_iou <= 1.0))
      throw ConfigError("anchors.screen_iou must lie in [0, 1]");
    if (denoise_window < 3 || denoise_window % 2 == 0)
      throw ConfigError("preprocess.denoise_window must be odd and >= 3");
    if (segmentation_threshold && (*segmentation_threshold < 0 || *segmentation_threshold > 255))
      throw ConfigError("preprocess.segmentation_threshold must lie in [0, 255]");
    if (mosaic_w < 2 || mosaic_h < 2) throw ConfigError("preprocess.mosaic_canvas must be at least 2x2");
    if (max_dets < 1) throw ConfigError("evaluation.max_dets must be >= 1");
  }
};

namespace detail {

inline const char* format_name(AnnotationFormat f) {
  switch (f) {
    case AnnotationFormat::coco_json: return "coco_json";
    case AnnotationFormat::csv_jsonboxes: return "csv_jsonboxes";
    default: return "auto";
  }
}

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : obj.items())
    if (!allowed.contains(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

inline const Json& section(const Json& root, const char* name) {
  static const Json empty = Json::object();
  if (!root.contains(name)) return empty;
  const Json& s = root[name];
  if (!s.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  return s;
}

template <typename T>
void read_opt(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj[key].get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const Json& root) {
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(root, {"schema_version", "seed", "flags", "loss", "anchors", "refine", "preprocess",
                                "evaluation", "paths"},
                         "config");
  if (!root.contains("schema_version") || !root["schema_version"].is_number_integer() ||
      root["schema_version"].get<int>() != kConfigSchemaVersion)
    throw ConfigError("config: schema_version must be " + std::to_string(kConfigSchemaVersion));

  PipelineConfig c;
  detail::read_opt(root, "seed", c.seed, "config");

  const Json& flags = detail::section(root, "flags");
  std::set<std::string> flag_names;
  c.flags.for_each([&](const char* n, bool&) { flag_names.insert(n); });
  detail::reject_unknown(flags, flag_names, "flags");
  c.flags.for_each([&](const char* n, bool& v) { detail::read_opt(flags, n, v, "flags"); });

  const Json& loss = detail::section(root, "loss");
  detail::reject_unknown(loss, {"sigma", "num_background_samples", "rng_seed", "beta", "frame_w", "frame_h"}, "loss");
  detail::read_opt(loss, "sigma", c.loss.sigma, "loss");
  detail::read_opt(loss, "num_background_samples", c.loss.num_background_samples, "loss");
  detail::read_opt(loss, "rng_seed", c.loss.rng_seed, "loss");
  detail::read_opt(loss, "frame_w", c.loss.frame_w, "loss");
  detail::read_opt(loss, "frame_h", c.loss.frame_h, "loss");
  if (loss.contains("beta")) {
    const Json& b = loss["beta"];
    if (b.is_string() && b.get<std::string>() == "standard_v") {
      c.loss.beta = BetaMode::standard();
    } else if (b.is_number()) {
      c.loss.beta = BetaMode::fixed_value(b.get<double>());
    } else {
      throw ConfigError("loss.beta must be \"standard_v\" or a number");
    }
  }

  const Json& anchors = detail::section(root, "anchors");
  detail::reject_unknown(anchors, {"base_areas", "aspect_ratios", "screen_iou"}, "anchors");
  if (anchors.contains("base_areas")) {
    std::vector<double> v;
    detail::read_opt(anchors, "base_areas", v, "anchors");
    if (v.size() != kNumAnchorAreas) throw ConfigError("anchors.base_areas must hold exactly 4 values");
    std::copy(v.begin(), v.end(), c.anchors.base_areas.begin());
  }
  if (anchors.contains("aspect_ratios")) {
    std::vector<double> v;
    detail::read_opt(anchors, "aspect_ratios", v, "anchors");
    if (v.size() != kNumAnchorRatios) throw ConfigError("anchors.aspect_ratios must hold exactly 3 values");
    std::copy(v.begin(), v.end(), c.anchors.aspect_ratios.begin());
  }
  detail::read_opt(anchors, "screen_iou", c.anchor_screen_iou, "anchors");

  const Json& refine = detail::section(root, "refine");
  detail::reject_unknown(refine, {"wbf_iou_thresh", "nms_diou_thresh", "score_floor", "max_iterations",
                                  "stability_epsilon"},
                         "refine");
  detail::read_opt(refine, "wbf_iou_thresh", c.refine.wbf_iou_thresh, "refine");
  detail::read_opt(refine, "nms_diou_thresh", c.refine.nms_diou_thresh, "refine");
  detail::read_opt(refine, "score_floor", c.refine.score_floor, "refine");
  detail::read_opt(refine, "max_iterations", c.refine.max_iterations, "refine");
  detail::read_opt(refine, "stability_epsilon", c.refine.stability_epsilon, "refine");

  const Json& pre = detail::section(root, "preprocess");
  detail::reject_unknown(pre, {"denoise_window", "segmentation_threshold", "mosaic_canvas"}, "preprocess");
  detail::read_opt(pre, "denoise_window", c.denoise_window, "preprocess");
  if (pre.contains("segmentation_threshold") && !pre["segmentation_threshold"].is_null()) {
    int t = 0;
    detail::read_opt(pre, "segmentation_threshold", t, "preprocess");
    c.segmentation_threshold = t;
  }
  if (pre.contains("mosaic_canvas")) {
    std::vector<int> v;
    detail::read_opt(pre, "mosaic_canvas", v, "preprocess");
    if (v.size() != 2) throw ConfigError("preprocess.mosaic_canvas must be [width, height]");
    c.mosaic_w = v[0];
    c.mosaic_h = v[1];
  }

  const Json& ev = detail::section(root, "evaluation");
  detail::reject_unknown(ev, {"max_dets", "format"}, "evaluation");
  detail::read_opt(ev, "max_dets", c.max_dets, "evaluation");
  if (ev.contains("format")) {
    std::string f;
    detail::read_opt(ev, "format", f, "evaluation");
    c.annotation_format = parse_annotation_format(f);
  }

  const Json& paths = detail::section(root, "paths");
  detail::reject_unknown(paths, {"annotations", "predictions", "images", "output_dir"}, "paths");
  detail::read_opt(paths, "annotations", c.paths.annotations, "paths");
  detail::read_opt(paths, "predictions", c.paths.predictions, "paths");
  detail::read_opt(paths, "images", c.paths.images, "paths");
  detail::read_opt(paths, "output_dir", c.paths.output_dir, "paths");

  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_text_file(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(root);
}

/// Canonical echo of every setting; also the input to the config hash.
inline OrderedJson config_to_json(const PipelineConfig& c) {
  OrderedJson j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = c.seed;
  OrderedJson flags = OrderedJson::object();
  c.flags.for_each([&](const char* n, const bool& v) { flags[n] = v; });
  j["flags"] = std::move(flags);
  OrderedJson beta = c.loss.beta.kind == BetaMode::Kind::standard_v ? OrderedJson("standard_v")
                                                                    : OrderedJson(c.loss.beta.value);
  j["loss"] = {{"sigma", c.loss.sigma},
               {"num_background_samples", c.loss.num_background_samples},
               {"rng_seed", c.loss.rng_seed},
               {"beta", beta},
               {"frame_w", c.loss.frame_w},
               {"frame_h", c.loss.frame_h}};
  j["anchors"] = {{"base_areas", c.anchors.base_areas},
                  {"aspect_ratios", c.anchors.aspect_ratios},
                  {"screen_iou", c.anchor_screen_iou}};
  j["refine"] = {{"wbf_iou_thresh", c.refine.wbf_iou_thresh},
                 {"nms_diou_thresh", c.refine.nms_diou_thresh},
                 {"score_floor", c.refine.score_floor},
                 {"max_iterations", c.refine.max_iterations},
                 {"stability_epsilon", c.refine.stability_epsilon}};
  j["preprocess"] = {{"denoise_window", c.denoise_window},
                     {"segmentation_threshold",
                      c.segmentation_threshold ? OrderedJson(*c.segmentation_threshold) : OrderedJson(nullptr)},
                     {"mosaic_canvas", {c.mosaic_w, c.mosaic_h}}};
  j["evaluation"] = {{"max_dets", c.max_dets}, {"format", detail::format_name(c.annotation_format)}};
  j["paths"] = {{"annotations", c.paths.annotations},
                {"predictions", c.paths.predictions},
                {"images", c.paths.images},
                {"output_dir", c.paths.output_dir}};
  return j;
}

inline std::uint64_t config_hash(const PipelineConfig& c) { return fnv1a64(config_to_json(c).dump()); }

/// Comma-separated overrides: "name" enables, "-name" disables, "none"
/// clears every flag. Applied left to right.
inline void apply_flag_overrides(StageFlags& flags, const std::string& list) {
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = detail::trim(tok);
    if (tok.empty()) continue;
    if (tok == "none") {
      flags.for_each([](const char*, bool& v) { v = false; });
      continue;
    }
    bool value = true;
    if (tok.front() == '-') {
      value = false;
      tok.erase(0, 1);
    }
    bool found = false;
    flags.for_each([&](const char* n, bool& v) {
      if (tok == n) {
        v = value;
        found = true;
      }
    });
    if (!found) throw ConfigError("unknown stage flag '" + tok + "'");
  }
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace utd
