#include <gtest/gtest.h>

#include <fstream>

#include <unistd.h>

#include "test_support.hpp"
#include "utd/pipeline.hpp"
#include "utd/render.hpp"

using namespace utd;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("utd_test_pipeline_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<PredictionRecord> fixture_preds() {
  return read_detections_jsonl(UTD_FIXTURES "/metric_preds.jsonl");
}

PipelineConfig all_postprocess() {
  PipelineConfig c;
  apply_flag_overrides(c.flags, "multiscale_anchors,nms,wbf,iterative_refinement");
  return c;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const PipelineConfig c = config_from_json(Json{{"schema_version", 1}});
  EXPECT_EQ(c.flags, StageFlags{});
  EXPECT_EQ(config_hash(c), config_hash(PipelineConfig{}));
  const PipelineConfig back = config_from_json(Json::parse(config_to_json(c).dump()));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, ParsesSections) {
  const auto c = config_from_json(Json::parse(R"({
    "schema_version": 1, "seed": 9,
    "flags": {"nms": true, "wbf": true},
    "loss": {"sigma": 0.25, "beta": 0.5},
    "refine": {"max_iterations": 7},
    "preprocess": {"segmentation_threshold": 90, "mosaic_canvas": [320, 240]},
    "evaluation": {"max_dets": 10, "format": "coco_json"},
    "paths": {"output_dir": "x"}})"));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_TRUE(c.flags.nms && c.flags.wbf && !c.flags.denoise);
  EXPECT_EQ(c.loss.sigma, 0.25);
  EXPECT_EQ(c.refine.max_iterations, 7);
  EXPECT_EQ(c.segmentation_threshold, 90);
  EXPECT_EQ(c.mosaic_w, 320);
  EXPECT_EQ(c.max_dets, 10);
  EXPECT_EQ(c.annotation_format, AnnotationFormat::coco_json);
  EXPECT_EQ(c.paths.output_dir, "x");
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(Json::object()), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"schema_version", 2}}), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"schema_version":1,"bogus":1})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"schema_version":1,"flags":{"nmss":true}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"schema_version":1,"loss":{"sigma":"a"}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"schema_version":1,"preprocess":{"denoise_window":4}})")),
               ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"schema_version":1,"anchors":{"base_areas":[1,2]}})")),
               ConfigError);
  EXPECT_THROW(load_config(UTD_FIXTURES "/missing_config.json"), ConfigError);
}

TEST(Config, FlagOverrides) {
  StageFlags f;
  apply_flag_overrides(f, "nms, wbf");
  EXPECT_TRUE(f.nms && f.wbf);
  apply_flag_overrides(f, "-nms");
  EXPECT_FALSE(f.nms);
  apply_flag_overrides(f, "none,denoise");
  EXPECT_FALSE(f.wbf);
  EXPECT_TRUE(f.denoise);
  EXPECT_THROW(apply_flag_overrides(f, "turbo"), ConfigError);
}

TEST(Postprocess, AllOffIsIdentity) {
  const std::string raw = utd::testing::slurp(UTD_FIXTURES "/metric_preds.jsonl");
  const auto r = run_postprocess(PipelineConfig{}, parse_detections_jsonl(raw));
  EXPECT_EQ(r.jsonl, detections_to_jsonl(parse_detections_jsonl(raw)));
  EXPECT_EQ(r.manifest["output_count"], r.manifest["input_count"]);
  // Architecture demos alone do not touch detections.
  PipelineConfig demos;
  apply_flag_overrides(demos.flags, "se_demo,csp2_demo,dilated_demo");
  const auto d = run_postprocess(demos, parse_detections_jsonl(raw));
  EXPECT_EQ(d.jsonl, r.jsonl);
  EXPECT_TRUE(d.manifest["block_demos"].contains("se_demo"));
}

TEST(Postprocess, DeterministicAcrossRuns) {
  const auto in = fixture_preds();
  PipelineConfig c = all_postprocess();
  apply_flag_overrides(c.flags, "se_demo,csp2_demo,dilated_demo");
  const auto a = run_postprocess(c, in);
  const auto b = run_postprocess(c, in);
  EXPECT_EQ(a.jsonl, b.jsonl);
  EXPECT_EQ(manifest_content_hash(a.manifest), manifest_content_hash(b.manifest));
  EXPECT_EQ(a.manifest["block_demos"], b.manifest["block_demos"]);
  c.seed += 1;
  EXPECT_NE(run_postprocess(c, in).manifest["block_demos"], a.manifest["block_demos"]);
}

TEST(Postprocess, StagesComposeInOrder) {
  const auto in = fixture_preds();
  const PipelineConfig c = all_postprocess();
  const auto r = run_postprocess(c, in);
  std::vector<PredictionRecord> expect;
  for (auto& [id, dets] : group_by_image(in)) {
    auto cur = anchor_screen(dets, c.anchors, c.anchor_screen_iou);
    cur = diou_nms(cur, c.refine.nms_diou_thresh);
    cur = wbf({cur}, c.refine.wbf_iou_thresh);
    cur = iterative_refine(cur, c.refine).detections;
    for (const auto& d : cur) expect.push_back({id, d});
  }
  EXPECT_EQ(r.jsonl, detections_to_jsonl(expect));
  const auto& st = r.manifest["stages"];
  ASSERT_EQ(st.size(), 4u);
  EXPECT_EQ(st[0]["name"], "multiscale_anchors");
  EXPECT_EQ(st[3]["name"], "iterative_refinement");
  EXPECT_LE(r.manifest["refinement"]["max_observed_iterations"].get<int>(), c.refine.max_iterations);
  for (const auto& e : r.manifest["refinement"]["per_image"])
    EXPECT_LE(e["iterations"].get<int>(), c.refine.max_iterations);
}

TEST(Postprocess, StagesChangeOutput) {
  const auto in = fixture_preds();
  PipelineConfig w;
  w.flags.wbf = true;
  const auto only_wbf = run_postprocess(w, in);
  const auto full = run_postprocess(all_postprocess(), in);
  EXPECT_NE(only_wbf.jsonl, full.jsonl);
  EXPECT_LT(only_wbf.records.size(), in.size());
}

TEST(Postprocess, TimingsExcludedFromContentHash) {
  const auto r = run_postprocess(all_postprocess(), fixture_preds());
  OrderedJson m = r.manifest;
  m["timings_seconds"]["nms"] = 123.0;
  EXPECT_EQ(manifest_content_hash(m), manifest_content_hash(r.manifest));
  m["output_count"] = 0;
  EXPECT_NE(manifest_content_hash(m), manifest_content_hash(r.manifest));
}

TEST(Files, PostprocessAndEvaluateWriteOutputs) {
  const fs::path dir = scratch("files");
  const auto r = postprocess_files(all_postprocess(), UTD_FIXTURES "/metric_preds.jsonl", dir);
  EXPECT_EQ(utd::testing::slurp((dir / "detections.jsonl").string()), r.jsonl);
  const Json m = Json::parse(utd::testing::slurp((dir / "manifest.json").string()));
  EXPECT_EQ(m["output_hash"], r.manifest["output_hash"]);
  const auto rep = evaluate_files(PipelineConfig{}, UTD_FIXTURES "/metric_preds.jsonl", UTD_FIXTURES "/metric_gt.json",
                                  dir / "eval");
  EXPECT_NEAR(rep.ap50, 0.680115191970, 1e-9);
  const Json j = Json::parse(utd::testing::slurp((dir / "eval" / "report.json").string()));
  EXPECT_NEAR(j["ap50"].get<double>(), rep.ap50, 1e-12);
  const std::string csv = utd::testing::slurp((dir / "eval" / "curve.csv").string());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  EXPECT_TRUE(fs::exists(dir / "eval" / "report.txt"));
  fs::remove_all(dir);
}

TEST(Files, AblationWritesSixReports) {
  const fs::path dir = scratch("ablate");
  const auto rows = ablate(PipelineConfig{}, UTD_FIXTURES "/metric_preds.jsonl", UTD_FIXTURES "/metric_gt.json", dir);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows.front().name, "csp2");
  EXPECT_EQ(rows.back().name, "csp2_se_dilated_anchors_wbf_refine");
  for (const auto& r : rows) {
    EXPECT_TRUE(r.flags.nms);
    const Json j = Json::parse(utd::testing::slurp((r.dir / "report.json").string()));
    for (const char* k : {"ap", "ap50", "ap75", "ar"}) {
      const double v = j[k].get<double>();
      EXPECT_TRUE(v >= 0.0 && v <= 1.0) << r.name << " " << k;
    }
    EXPECT_TRUE(fs::exists(r.dir / "manifest.json"));
  }
  EXPECT_EQ(Json::parse(utd::testing::slurp((dir / "ablation.json").string())).size(), 6u);
  fs::remove_all(dir);
}

TEST(Files, UnknownImageIdInPredictions) {
  const fs::path dir = scratch("unknown");
  std::ofstream(dir / "p.jsonl") << R"({"image_id":999,"x_min":0,"y_min":0,"x_max":1,"y_max":1,"score":0.5})" << '\n';
  EXPECT_THROW(evaluate_files(PipelineConfig{}, dir / "p.jsonl", UTD_FIXTURES "/metric_gt.json", dir), InputError);
  fs::remove_all(dir);
}

TEST(Render, NoDetectionsLeavesImageUnchanged) {
  Image img(16, 12, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const Image out = render_overlay(img, {});
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(Render, CornersTakeClassColor) {
  Image img(64, 64, 1);
  const Image out = render_overlay(img, {{{10, 20, 30, 40}, 0.5, 2}});
  ASSERT_EQ(out.channels, 3);
  const Rgb c = class_color(2);
  for (auto [x, y] : {std::pair{10, 20}, {30, 20}, {10, 40}, {30, 40}}) {
    EXPECT_EQ(out.at(x, y, 0), c.r);
    EXPECT_EQ(out.at(x, y, 1), c.g);
    EXPECT_EQ(out.at(x, y, 2), c.b);
  }
  EXPECT_EQ(out.at(20, 30, 0), 0);
}

TEST(Render, SvgIsByteStable) {
  const std::string svg = render_svg(64, 48, {{{10, 20, 50, 60}, 0.9, 1}}, "frame.png");
  const std::string expect =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"64\" height=\"48\" viewBox=\"0 0 64 48\">\n"
      "  <image href=\"frame.png\" x=\"0\" y=\"0\" width=\"64\" height=\"48\"/>\n"
      "  <rect x=\"10.00\" y=\"20.00\" width=\"40.00\" height=\"40.00\" fill=\"none\" stroke=\"#ff9d97\" "
      "stroke-width=\"1\"/>\n"
      "  <text x=\"10.00\" y=\"17.00\" font-family=\"monospace\" font-size=\"10\" fill=\"#ff9d97\">"
      "10,20 40\xC3\x97"
      "40 s=0.90</text>\n"
      "</svg>\n";
  EXPECT_EQ(svg, expect);
}

TEST(Bench, EmptyAndSmallClouds) {
  PipelineConfig c;
  const auto rows = bench(c, {0, 64}, 5);
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) {
    EXPECT_GE(r.median_seconds, 0.0);
    if (r.n == 0) {
      EXPECT_EQ(r.output_count, 0u);
    }
  }
  EXPECT_THROW(bench(c, {10}, 4), ConfigError);
  EXPECT_FALSE(bench_table(rows).empty());
}

TEST(Bench, CloudIsSeeded) {
  const auto a = synthetic_detection_cloud(200, 4);
  const auto b = synthetic_detection_cloud(200, 4);
  ASSERT_EQ(a.size(), 200u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].box, b[i].box);
}

TEST(Preprocess, DirectoryRun) {
  const fs::path dir = scratch("pre");
  fs::create_directories(dir / "in");
  for (int k = 0; k < 4; ++k) {
    Image img(32, 24, 3);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 32; ++x)
        for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = static_cast<std::uint8_t>((x * 8 + y * (k + 1) + ch) & 255);
    write_pnm(dir / "in" / ("f" + std::to_string(k) + ".ppm"), img);
  }
  PipelineConfig c;
  apply_flag_overrides(c.flags, "denoise,segmentation,mosaic");
  c.mosaic_w = 64;
  c.mosaic_h = 48;
  const auto s = run_preprocess(c, dir / "in", dir / "out");
  EXPECT_EQ(s["images"], 4);
  EXPECT_EQ(s["mosaics"], 1);
  EXPECT_TRUE(fs::exists(dir / "out" / "preprocessed" / "f0.ppm"));
  EXPECT_TRUE(fs::exists(dir / "out" / "preprocessed" / "f3_mask.pgm"));
  EXPECT_EQ(read_image(dir / "out" / "preprocessed" / "mosaic_0.ppm").w, 64);
  EXPECT_THROW(run_preprocess(c, dir / "nope", dir / "out"), InputError);
  fs::remove_all(dir);
}

TEST(Config, SampleConfigLoads) {
  const auto c = load_config(UTD_FIXTURES "/../../samples/pipeline_config.json");
  EXPECT_TRUE(c.flags.iterative_refinement);
  EXPECT_EQ(c.loss.frame_h, 480.0);
}
