#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "utd/anchors.hpp"
#include "utd/config.hpp"
#include "utd/evaluation.hpp"
#include "utd/hash.hpp"
#include "utd/io.hpp"
#include "utd/nn_blocks.hpp"
#include "utd/png_io.hpp"
#include "utd/postprocess.hpp"
#include "utd/preprocess.hpp"
#include "utd/render.hpp"
#include "utd/rng.hpp"

namespace utd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small helpers

namespace detail {

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Runs `f`, prefixing any library error with the stage name.
template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError("stage " + stage + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError("stage " + stage + ": " + e.what());
  }
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multiscale anchor screening

/// Best IoU between `b` and any of the anchor shapes placed on b's center.
inline double best_anchor_shape_iou(const Box& b, const std::array<AnchorShape, kAnchorsPerCell>& shapes) {
  const double w = b.width(), h = b.height();
  if (!(w > 0.0 && h > 0.0)) return 0.0;
  double best = 0.0;
  for (const auto& s : shapes) {
    const double inter = std::min(w, s.width) * std::min(h, s.height);
    best = std::max(best, inter / (w * h + s.width * s.height - inter));
  }
  return best;
}

/// Keeps detections whose shape agrees with at least one anchor to `min_iou`.
inline std::vector<Detection> anchor_screen(const std::vector<Detection>& dets, const AnchorSpec& spec,
                                            double min_iou) {
  const auto shapes = anchor_shapes(spec);
  std::vector<Detection> out;
  for (const auto& d : dets)
    if (best_anchor_shape_iou(d.box, shapes) >= min_iou) out.push_back(d);
  return out;
}

// ---------------------------------------------------------------------------
// Architecture demos: seeded forward passes through the attention, CSP2 and
// dilated blocks. No trained weights exist here, so these only exercise the
// blocks and record a fingerprint of their output.

inline OrderedJson feature_fingerprint(const FeatureMap& y) {
  double sum = 0.0, sq = 0.0;
  for (double v : y.values()) {
    sum += v;
    sq += v * v;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", sum);
  const std::string sum_s = buf;
  std::snprintf(buf, sizeof buf, "%.12e", std::sqrt(sq));
  return {{"shape", {y.n(), y.c(), y.h(), y.w()}}, {"sum", sum_s}, {"l2", std::string(buf)}};
}

inline OrderedJson run_block_demos(const StageFlags& flags, std::uint64_t seed) {
  OrderedJson out = OrderedJson::object();
  if (flags.se_demo) {
    out["se_demo"] = detail::in_stage("se_demo", [&] {
      SeededRng rng(seed);
      const FeatureMap x = FeatureMap::random(1, 8, 16, 16, rng);
      return feature_fingerprint(se_block(x, SEParams::random(8, 2, rng)));
    });
  }
  if (flags.csp2_demo) {
    out["csp2_demo"] = detail::in_stage("csp2_demo", [&] {
      SeededRng rng(seed + 1);
      const FeatureMap x = FeatureMap::random(1, 8, 16, 16, rng);
      return feature_fingerprint(csp2_block(x, Csp2Params::random(8, 4, 4, 4, 4, rng)));
    });
  }
  if (flags.dilated_demo) {
    out["dilated_demo"] = detail::in_stage("dilated_demo", [&] {
      SeededRng rng(seed + 2);
      const FeatureMap x = FeatureMap::random(1, 8, 16, 16, rng);
      return feature_fingerprint(dilated_conv2d(x, ConvParams::random_same(8, 8, 3, 2, rng)));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Post-processing run

inline constexpr const char* kPostprocessStages[] = {"multiscale_anchors", "nms", "wbf", "iterative_refinement"};

struct PostprocessResult {
  std::vector<PredictionRecord> records;
  std::string jsonl;
  OrderedJson manifest;  // "timings_seconds" is the only run-dependent key
};

inline bool any_postprocess_stage(const StageFlags& f) {
  return f.multiscale_anchors || f.nms || f.wbf || f.iterative_refinement;
}

/// Applies the enabled stages per image in the order anchor screening, NMS,
/// WBF, iterative refinement. With no detection stage enabled the parsed
/// records pass through unchanged and in input order.
inline PostprocessResult run_postprocess(const PipelineConfig& cfg, const std::vector<PredictionRecord>& in) {
  cfg.validate();
  PostprocessResult res;
  std::map<std::string, double> timing;
  std::map<std::string, std::size_t> stage_out;
  for (const char* s : kPostprocessStages) {
    timing[s] = 0.0;
    stage_out[s] = 0;
  }
  OrderedJson refine_log = OrderedJson::array();
  int max_seen = 0;

  if (!any_postprocess_stage(cfg.flags)) {
    res.records = in;
  } else {
    for (auto& [id, dets] : group_by_image(in)) {
      std::vector<Detection> cur = std::move(dets);
      auto stage = [&](const char* name, bool enabled, auto&& op) {
        if (!enabled) return;
        detail::Stopwatch sw;
        cur = detail::in_stage(name, op);
        timing[name] += sw.seconds();
        stage_out[name] += cur.size();
      };
      stage("multiscale_anchors", cfg.flags.multiscale_anchors,
            [&] { return anchor_screen(cur, cfg.anchors, cfg.anchor_screen_iou); });
      stage("nms", cfg.flags.nms, [&] { return diou_nms(cur, cfg.refine.nms_diou_thresh); });
      stage("wbf", cfg.flags.wbf, [&] { return wbf({cur}, cfg.refine.wbf_iou_thresh); });
      stage("iterative_refinement", cfg.flags.iterative_refinement, [&] {
        RefineResult r = iterative_refine(cur, cfg.refine);
        if (r.iterations > cfg.refine.max_iterations)
          throw InvariantError("refinement exceeded its iteration cap");
        max_seen = std::max(max_seen, r.iterations);
        refine_log.push_back({{"image_id", id.to_json<OrderedJson>()},
                              {"iterations", r.iterations},
                              {"cardinality", r.cardinality}});
        return std::move(r.detections);
      });
      for (const auto& d : cur) res.records.push_back({id, d});
    }
  }
  res.jsonl = detections_to_jsonl(res.records);

  OrderedJson m;
  m["manifest_version"] = 1;
  m["config_hash"] = hex64(config_hash(cfg));
  m["config"] = config_to_json(cfg);
  m["seed"] = cfg.seed;
  m["input_count"] = in.size();
  m["output_count"] = res.records.size();
  OrderedJson stages = OrderedJson::array();
  const std::map<std::string, bool> enabled{{"multiscale_anchors", cfg.flags.multiscale_anchors},
                                            {"nms", cfg.flags.nms},
                                            {"wbf", cfg.flags.wbf},
                                            {"iterative_refinement", cfg.flags.iterative_refinement}};
  for (const char* s : kPostprocessStages) {
    OrderedJson e = {{"name", s}, {"enabled", enabled.at(s)}};
    if (enabled.at(s)) e["output_count"] = stage_out[s];
    stages.push_back(std::move(e));
  }
  m["stages"] = std::move(stages);
  if (cfg.flags.iterative_refinement) {
    m["refinement"] = {{"max_iterations", cfg.refine.max_iterations},
                       {"max_observed_iterations", max_seen},
                       {"per_image", std::move(refine_log)}};
  }
  m["block_demos"] = run_block_demos(cfg.flags, cfg.seed);
  m["output_hash"] = hex64(fnv1a64(res.jsonl));
  OrderedJson t = OrderedJson::object();
  for (const char* s : kPostprocessStages)
    if (enabled.at(s)) t[s] = timing[s];
  m["timings_seconds"] = std::move(t);
  res.manifest = std::move(m);
  return res;
}

/// Hash of the manifest with run-dependent timings removed.
inline std::uint64_t manifest_content_hash(OrderedJson manifest) {
  manifest.erase("timings_seconds");
  return fnv1a64(manifest.dump());
}

inline void write_postprocess(const PostprocessResult& r, const fs::path& dir) {
  detail::write_text_file(dir / "detections.jsonl", r.jsonl);
  detail::write_text_file(dir / "manifest.json", r.manifest.dump(2) + "\n");
}

/// Loads predictions from the configured path and writes detections.jsonl
/// plus manifest.json into `out_dir`.
inline PostprocessResult postprocess_files(const PipelineConfig& cfg, const fs::path& predictions,
                                           const fs::path& out_dir) {
  const auto in = read_detections_jsonl(predictions);
  PostprocessResult r = run_postprocess(cfg, in);
  write_postprocess(r, out_dir);
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

inline std::string curve_csv(const EvalReport& r) {
  std::string s = "iou_threshold,ap\n";
  const auto t = iou_thresholds();
  char buf[64];
  for (int i = 0; i < kNumIouThresholds; ++i) {
    std::snprintf(buf, sizeof buf, "%.2f,%.10f\n", t[i], r.per_threshold_ap[i]);
    s += buf;
  }
  return s;
}

/// Evaluates predictions against annotations and writes report.json,
/// report.txt and curve.csv into `out_dir`.
inline EvalReport evaluate_files(const PipelineConfig& cfg, const fs::path& predictions,
                                 const fs::path& annotations, const fs::path& out_dir) {
  const EvalReport r = full_report(predictions, annotations, cfg.annotation_format, cfg.max_dets);
  detail::write_text_file(out_dir / "report.json", report_to_json(r).dump(2) + "\n");
  detail::write_text_file(out_dir / "report.txt", format_report_text(r));
  detail::write_text_file(out_dir / "curve.csv", curve_csv(r));
  return r;
}

// ---------------------------------------------------------------------------
// Ablation sweep

struct AblationRow {
  std::string name;
  StageFlags flags;
  EvalReport report;
  fs::path dir;
};

/// The six cumulative flag sets, CSP2 first and refinement last. NMS stays on
/// throughout as the baseline detector's own suppression.
inline std::vector<std::pair<std::string, StageFlags>> ablation_combos(const StageFlags& base) {
  std::vector<std::pair<std::string, StageFlags>> out;
  StageFlags f = base;
  f.csp2_demo = true;
  f.nms = true;
  f.se_demo = f.dilated_demo = f.multiscale_anchors = f.wbf = f.iterative_refinement = false;
  out.emplace_back("csp2", f);
  f.se_demo = true;
  out.emplace_back("csp2_se", f);
  f.dilated_demo = true;
  out.emplace_back("csp2_se_dilated", f);
  f.multiscale_anchors = true;
  out.emplace_back("csp2_se_dilated_anchors", f);
  f.wbf = true;
  out.emplace_back("csp2_se_dilated_anchors_wbf", f);
  f.iterative_refinement = true;
  out.emplace_back("csp2_se_dilated_anchors_wbf_refine", f);
  return out;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string s = "combo                                  AP      AP50    AP75    AR\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-38s %.4f  %.4f  %.4f  %.4f\n", r.name.c_str(), r.report.ap, r.report.ap50,
                  r.report.ap75, r.report.ar);
    s += buf;
  }
  return s;
}

inline std::vector<AblationRow> ablate(const PipelineConfig& cfg, const fs::path& predictions,
                                       const fs::path& annotations, const fs::path& out_dir) {
  const auto in = read_detections_jsonl(predictions);
  const GroundTruth gt = load_annotations(annotations, cfg.annotation_format);
  std::vector<AblationRow> rows;
  OrderedJson summary = OrderedJson::array();
  int k = 0;
  for (const auto& [name, flags] : ablation_combos(cfg.flags)) {
    PipelineConfig c = cfg;
    c.flags = flags;
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%d_", ++k);
    const fs::path dir = out_dir / "ablation" / (prefix + name);
    const PostprocessResult pr = run_postprocess(c, in);
    write_postprocess(pr, dir);
    const EvalReport rep = evaluate_images(join_for_eval(gt, pr.records), c.max_dets);
    detail::write_text_file(dir / "report.json", report_to_json(rep).dump(2) + "\n");
    detail::write_text_file(dir / "report.txt", format_report_text(rep));
    detail::write_text_file(dir / "curve.csv", curve_csv(rep));
    OrderedJson flags_j = OrderedJson::object();
    flags.for_each([&](const char* n, const bool& v) { flags_j[n] = v; });
    summary.push_back({{"name", name}, {"flags", flags_j}, {"report", report_to_json(rep)}});
    rows.push_back({name, flags, rep, dir});
  }
  detail::write_text_file(out_dir / "ablation.json", summary.dump(2) + "\n");
  detail::write_text_file(out_dir / "ablation.txt", ablation_table(rows));
  return rows;
}

// ---------------------------------------------------------------------------
// Benchmark

/// `n` detections clustered around n/8 (at least 1) objects in a 1280x720
/// frame, jittered in position, size and score.
inline std::vector<Detection> synthetic_detection_cloud(std::size_t n, std::uint64_t seed, int num_classes = 1) {
  SeededRng rng(seed);
  std::vector<Detection> out;
  if (n == 0) return out;
  const std::size_t objects = std::max<std::size_t>(1, n / 8);
  std::vector<Detection> centers;
  for (std::size_t i = 0; i < objects; ++i) {
    const double w = rng.uniform(16.0, 160.0), h = rng.uniform(16.0, 160.0);
    const double cx = rng.uniform(w / 2, 1280.0 - w / 2), cy = rng.uniform(h / 2, 720.0 - h / 2);
    centers.push_back({Box::from_center(cx, cy, w, h), 0.0,
                       static_cast<int>(rng.uniform_int(0, std::max(0, num_classes - 1)))});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Detection& c = centers[i % objects];
    const double w = c.box.width() * rng.uniform(0.85, 1.15);
    const double h = c.box.height() * rng.uniform(0.85, 1.15);
    const double cx = c.box.center_x() + rng.uniform(-0.1, 0.1) * c.box.width();
    const double cy = c.box.center_y() + rng.uniform(-0.1, 0.1) * c.box.height();
    out.push_back({Box::from_center(cx, cy, w, h), rng.uniform(0.05, 1.0), c.class_id});
  }
  return out;
}

struct BenchRow {
  std::size_t n = 0;
  std::string stage;
  double median_seconds = 0.0;
  std::size_t output_count = 0;
};

inline std::vector<BenchRow> bench(const PipelineConfig& cfg, const std::vector<std::size_t>& sizes,
                                   int repetitions = 5) {
  if (repetitions < 5) throw ConfigError("bench: at least 5 repetitions are required");
  cfg.validate();
  std::vector<BenchRow> rows;
  using Op = std::function<std::vector<Detection>(const std::vector<Detection>&)>;
  const std::vector<std::pair<std::string, Op>> ops{
      {"multiscale_anchors",
       [&](const auto& d) { return anchor_screen(d, cfg.anchors, cfg.anchor_screen_iou); }},
      {"nms", [&](const auto& d) { return diou_nms(d, cfg.refine.nms_diou_thresh); }},
      {"wbf", [&](const auto& d) { return wbf({d}, cfg.refine.wbf_iou_thresh); }},
      {"iterative_refinement", [&](const auto& d) { return iterative_refine(d, cfg.refine).detections; }}};
  for (std::size_t n : sizes) {
    const auto cloud = synthetic_detection_cloud(n, cfg.seed);
    for (const auto& [name, op] : ops) {
      std::vector<double> t;
      std::size_t count = 0;
      for (int r = 0; r < repetitions; ++r) {
        detail::Stopwatch sw;
        count = op(cloud).size();
        t.push_back(sw.seconds());
      }
      rows.push_back({n, name, detail::median(t), count});
    }
  }
  return rows;
}

inline std::string bench_table(const std::vector<BenchRow>& rows) {
  std::string s = "n        stage                  median_ms     out\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-8zu %-22s %10.3f  %6zu\n", r.n, r.stage.c_str(), r.median_seconds * 1e3,
                  r.output_count);
    s += buf;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Image preprocessing over a directory

inline bool is_image_file(const fs::path& p) {
  const auto e = p.extension().string();
  return e == ".ppm" || e == ".pgm" || e == ".png";
}

/// Denoises, segments and mosaics the images under cfg.paths.images as the
/// flags request, writing results under out_dir/preprocessed. Returns a
/// summary suitable for a manifest.
inline OrderedJson run_preprocess(const PipelineConfig& cfg, const fs::path& images_dir, const fs::path& out_dir,
                                  const GroundTruth* gt = nullptr) {
  if (!fs::is_directory(images_dir)) throw InputError("images path is not a directory: " + images_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images_dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  const fs::path dst = out_dir / "preprocessed";
  fs::create_directories(dst);

  OrderedJson summary;
  summary["images"] = files.size();
  std::vector<LabeledImage> loaded;
  for (const auto& f : files) {
    Image img = read_image(f);
    const std::string stem = f.stem().string();
    if (cfg.flags.denoise) {
      img = detail::in_stage("denoise", [&] { return denoise(img, cfg.denoise_window); });
      write_pnm(dst / (stem + (img.channels == 1 ? ".pgm" : ".ppm")), img);
    }
    if (cfg.flags.segmentation) {
      const Image mask =
          detail::in_stage("segmentation", [&] { return segment_water_boundary(img, cfg.segmentation_threshold); });
      write_mask_pgm(dst / (stem + "_mask.pgm"), mask);
    }
    LabeledImage li{std::move(img), {}};
    if (gt != nullptr) {
      for (const auto& a : gt->images)
        if (a.file_name == f.filename().string()) li.boxes = a.boxes;
    }
    loaded.push_back(std::move(li));
  }
  std::size_t mosaics = 0;
  if (cfg.flags.mosaic) {
    OrderedJson boxes = OrderedJson::array();
    for (std::size_t i = 0; i + 4 <= loaded.size(); i += 4) {
      const std::vector<LabeledImage> group(loaded.begin() + static_cast<long>(i),
                                            loaded.begin() + static_cast<long>(i + 4));
      const LabeledImage m =
          detail::in_stage("mosaic", [&] { return mosaic(group, cfg.mosaic_w, cfg.mosaic_h, cfg.seed + i); });
      const std::string name = "mosaic_" + std::to_string(mosaics++);
      write_pnm(dst / (name + (m.image.channels == 1 ? ".pgm" : ".ppm")), m.image);
      OrderedJson bl = OrderedJson::array();
      for (const auto& b : m.boxes)
        bl.push_back({b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max, b.class_id});
      boxes.push_back({{"name", name}, {"boxes", bl}});
    }
    detail::write_text_file(dst / "mosaic_boxes.json", boxes.dump(2) + "\n");
  }
  summary["denoised"] = cfg.flags.denoise ? files.size() : 0;
  summary["segmented"] = cfg.flags.segmentation ? files.size() : 0;
  summary["mosaics"] = mosaics;
  return summary;
}

}  // namespace utd
