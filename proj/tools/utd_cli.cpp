// utd: command-line driver for the detection post-processing pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "utd/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::string input;
  std::string output;
  std::string format;
  std::optional<std::uint64_t> seed;
  std::string flags;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "Pipeline config JSON");
  app->add_option("--input", o.input, "Input file or directory");
  app->add_option("--output", o.output, "Output directory");
  app->add_option("--format", o.format, "Annotation format")
      ->check(CLI::IsMember({"auto", "coco_json", "csv_jsonboxes"}));
  app->add_option("--seed", o.seed, "Seed override");
  app->add_option("--flags", o.flags, "Comma-separated stage overrides: name, -name, none");
}

utd::PipelineConfig resolve(const CommonOptions& o) {
  utd::PipelineConfig cfg = o.config.empty() ? utd::PipelineConfig{} : utd::load_config(o.config);
  if (!o.format.empty()) cfg.annotation_format = utd::parse_annotation_format(o.format);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.flags.empty()) utd::apply_flag_overrides(cfg.flags, o.flags);
  if (!o.output.empty()) cfg.paths.output_dir = o.output;
  cfg.validate();
  return cfg;
}

std::string require(const std::string& value, const std::string& fallback, const char* what) {
  if (!value.empty()) return value;
  if (!fallback.empty()) return fallback;
  throw utd::ConfigError(std::string("no ") + what + " given (flag or config path)");
}

void print_report(const utd::EvalReport& r) { std::cout << utd::format_report_text(r); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Underwater target detection pipeline: ingest, postprocess, evaluate, render, bench, ablate"};
  app.require_subcommand(1);

  CommonOptions ingest_o, pre_o, post_o, eval_o, render_o, bench_o, ablate_o;
  std::string eval_annotations, ablate_annotations, render_detections, render_image_id;
  std::vector<std::size_t> bench_sizes{100, 1000, 10000};
  int bench_reps = 5;

  auto* ingest = app.add_subcommand("ingest", "Load annotations and write them in normalized form");
  add_common(ingest, ingest_o);

  auto* pre = app.add_subcommand("preprocess", "Denoise, segment and mosaic a directory of images");
  add_common(pre, pre_o);

  auto* post = app.add_subcommand("postprocess", "Run the enabled detection stages over JSON-lines detections");
  add_common(post, post_o);

  auto* eval = app.add_subcommand("evaluate", "Score detections against annotations");
  add_common(eval, eval_o);
  eval->add_option("--annotations", eval_annotations, "Ground-truth annotations");

  auto* render = app.add_subcommand("render", "Draw detections over an image (raster and SVG)");
  add_common(render, render_o);
  render->add_option("--detections", render_detections, "JSON-lines detections")->required();
  render->add_option("--image-id", render_image_id, "Only draw detections for this image id");

  auto* bench = app.add_subcommand("bench", "Time each stage over synthetic detection clouds");
  add_common(bench, bench_o);
  bench->add_option("--sizes", bench_sizes, "Cloud sizes")->delimiter(',');
  bench->add_option("--reps", bench_reps, "Repetitions per measurement (>= 5)");

  auto* ablate = app.add_subcommand("ablate", "Evaluate the six cumulative module combinations");
  add_common(ablate, ablate_o);
  ablate->add_option("--annotations", ablate_annotations, "Ground-truth annotations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (ingest->parsed()) {
      const auto cfg = resolve(ingest_o);
      const auto src = require(ingest_o.input, cfg.paths.annotations, "annotations input");
      const auto gt = utd::load_annotations(src, cfg.annotation_format);
      std::size_t boxes = 0;
      for (const auto& im : gt.images) boxes += im.boxes.size();
      const auto out = utd::fs::path(cfg.paths.output_dir) / "annotations.json";
      utd::detail::write_text_file(out, utd::annotations_to_json(gt).dump(2) + "\n");
      std::cout << gt.images.size() << " images, " << boxes << " boxes -> " << out.string() << '\n';
    } else if (pre->parsed()) {
      const auto cfg = resolve(pre_o);
      const auto dir = require(pre_o.input, cfg.paths.images, "images directory");
      std::optional<utd::GroundTruth> gt;
      if (!cfg.paths.annotations.empty()) gt = utd::load_annotations(cfg.paths.annotations, cfg.annotation_format);
      const auto summary = utd::run_preprocess(cfg, dir, cfg.paths.output_dir, gt ? &*gt : nullptr);
      std::cout << summary.dump(2) << '\n';
    } else if (post->parsed()) {
      const auto cfg = resolve(post_o);
      const auto src = require(post_o.input, cfg.paths.predictions, "predictions input");
      const auto r = utd::postprocess_files(cfg, src, cfg.paths.output_dir);
      std::cout << r.manifest["input_count"] << " -> " << r.manifest["output_count"] << " detections, output hash "
                << r.manifest["output_hash"].get<std::string>() << '\n';
    } else if (eval->parsed()) {
      const auto cfg = resolve(eval_o);
      const auto preds = require(eval_o.input, cfg.paths.predictions, "predictions input");
      const auto ann = require(eval_annotations, cfg.paths.annotations, "annotations");
      print_report(utd::evaluate_files(cfg, preds, ann, cfg.paths.output_dir));
    } else if (render->parsed()) {
      const auto cfg = resolve(render_o);
      const auto src = require(render_o.input, "", "image input");
      const utd::Image img = utd::read_image(src);
      std::vector<utd::Detection> dets;
      for (const auto& r : utd::read_detections_jsonl(render_detections))
        if (render_image_id.empty() || r.image_id.text == render_image_id) dets.push_back(r.det);
      const utd::fs::path in_path(src);
      const utd::fs::path out_dir(cfg.paths.output_dir);
      utd::fs::create_directories(out_dir);
      const std::string stem = in_path.stem().string() + "_overlay";
      const std::string ext = in_path.extension() == ".png" ? ".png" : ".ppm";
      utd::write_image(out_dir / (stem + ext), utd::render_overlay(img, dets));
      utd::detail::write_text_file(out_dir / (stem + ".svg"),
                                   utd::render_svg(img.w, img.h, dets, in_path.filename().string()));
      std::cout << dets.size() << " detections drawn -> " << (out_dir / (stem + ext)).string() << '\n';
    } else if (bench->parsed()) {
      const auto cfg = resolve(bench_o);
      const auto rows = utd::bench(cfg, bench_sizes, bench_reps);
      const std::string table = utd::bench_table(rows);
      std::cout << table;
      if (!bench_o.output.empty()) utd::detail::write_text_file(utd::fs::path(bench_o.output) / "bench.txt", table);
    } else if (ablate->parsed()) {
      const auto cfg = resolve(ablate_o);
      const auto preds = require(ablate_o.input, cfg.paths.predictions, "predictions input");
      const auto ann = require(ablate_annotations, cfg.paths.annotations, "annotations");
      const auto rows = utd::ablate(cfg, preds, ann, cfg.paths.output_dir);
      std::cout << utd::ablation_table(rows);
    }
  } catch (const utd::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const utd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const utd::InvariantError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
