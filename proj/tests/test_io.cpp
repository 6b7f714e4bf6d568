#include <gtest/gtest.h>

#include <string>

#include "test_support.hpp"
#include "utd/io.hpp"

using namespace utd;

namespace {

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Coco, ParsesImagesAndBoxes) {
  const auto gt = parse_coco_json(R"({"images":[{"id":7,"file_name":"a.png","width":64,"height":48},
    {"id":9}],"annotations":[{"image_id":7,"bbox":[1,2,3,4],"category_id":2}]})");
  ASSERT_EQ(gt.images.size(), 2u);
  EXPECT_EQ(gt.images[0].image_id.text, "7");
  EXPECT_TRUE(gt.images[0].image_id.numeric);
  EXPECT_EQ(gt.images[0].width, 64);
  ASSERT_EQ(gt.images[0].boxes.size(), 1u);
  EXPECT_EQ(gt.images[0].boxes[0].box, (Box{1, 2, 4, 6}));
  EXPECT_EQ(gt.images[0].boxes[0].class_id, 2);
  EXPECT_TRUE(gt.images[1].boxes.empty());
}

TEST(Coco, Errors) {
  EXPECT_NE(error_of([] { parse_coco_json(R"({"images":[{"id":1},{"id":1}]})"); }).find("duplicate"),
            std::string::npos);
  EXPECT_NE(error_of([] {
              parse_coco_json(R"({"images":[{"id":1}],"annotations":[{"image_id":2,"bbox":[0,0,1,1]}]})");
            }).find("unknown image id"),
            std::string::npos);
  EXPECT_THROW(parse_coco_json(R"({"images":[{"id":1}],"annotations":[{"image_id":1,"bbox":[0,0,-1,1]}]})"),
               InputError);
  EXPECT_THROW(parse_coco_json("{"), InputError);
  EXPECT_THROW(parse_coco_json("[]"), InputError);
}

TEST(Csv, Fixture) {
  const auto gt = load_annotations(UTD_FIXTURES "/annotations.csv");
  ASSERT_EQ(gt.images.size(), 3u);
  EXPECT_EQ(gt.images[0].image_id.text, "frame_000");
  EXPECT_EQ(gt.images[0].sequence, "seq_a");
  ASSERT_EQ(gt.images[0].boxes.size(), 1u);
  EXPECT_EQ(gt.images[0].boxes[0].box, (Box{10, 20, 40, 60}));
  EXPECT_TRUE(gt.images[1].boxes.empty());
  ASSERT_EQ(gt.images[2].boxes.size(), 2u);
  EXPECT_EQ(gt.images[2].boxes[0].box, (Box{1.5, 2, 4.5, 6}));
  EXPECT_EQ(gt.images[2].sequence, "seq_b");
}

TEST(Csv, BoxColumnFoundByContent) {
  const auto gt = parse_csv_jsonboxes("name,boxes,note\nimg,\"[{\"\"x\"\":0,\"\"y\"\":0,\"\"width\"\":2,"
                                      "\"\"height\"\":2}]\",hello\n");
  ASSERT_EQ(gt.images.size(), 1u);
  EXPECT_EQ(gt.images[0].image_id.text, "img");
  EXPECT_EQ(gt.images[0].boxes.size(), 1u);
}

TEST(Csv, MalformedRowNamesRecord) {
  const std::string msg = error_of([] { parse_csv_jsonboxes("image_id,annotations\na,[]\nb,[{\"x\":1}\n"); });
  EXPECT_NE(msg.find("record 3"), std::string::npos) << msg;
  EXPECT_THROW(parse_csv_jsonboxes("image_id,annotations\na,[]\na,[]\n"), InputError);
  EXPECT_THROW(parse_csv_jsonboxes(""), InputError);
}

TEST(Jsonl, ParseErrorsCarryLineNumber) {
  const std::string ok = R"({"image_id":1,"x_min":0,"y_min":0,"x_max":1,"y_max":1,"score":0.5})";
  const std::string msg = error_of([&] { parse_detections_jsonl(ok + "\n\n{oops}\n"); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_THROW(parse_detection_line(R"({"image_id":1,"x_min":0,"y_min":0,"x_max":1,"y_max":1,"score":1.5})", 1),
               InputError);
  EXPECT_THROW(parse_detection_line(R"({"image_id":1,"x_min":2,"y_min":0,"x_max":1,"y_max":1,"score":0.5})", 1),
               InputError);
  EXPECT_THROW(parse_detection_line(R"({"image_id":1,"x_min":0,"y_min":0,"x_max":1,"score":0.5})", 1),
               InputError);
}

TEST(Jsonl, RoundTripIsExact) {
  SeededRng rng(3);
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 50; ++i)
    recs.push_back({i % 2 ? ImageId{std::to_string(i % 5), true} : ImageId{"img" + std::to_string(i % 3), false},
                    {utd::testing::random_box(rng, -50, 500, 0.5), rng.uniform(), static_cast<int>(i % 4)}});
  const std::string text = detections_to_jsonl(recs);
  const auto back = parse_detections_jsonl(text);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].image_id, recs[i].image_id);
    EXPECT_EQ(back[i].image_id.numeric, recs[i].image_id.numeric);
    EXPECT_EQ(back[i].det.box, recs[i].det.box);
    EXPECT_EQ(back[i].det.score, recs[i].det.score);
    EXPECT_EQ(back[i].det.class_id, recs[i].det.class_id);
  }
  EXPECT_EQ(detections_to_jsonl(back), text);
}

TEST(Jsonl, GroupByImageKeepsOrder) {
  const auto recs = parse_detections_jsonl(
      R"({"image_id":"b","x_min":0,"y_min":0,"x_max":1,"y_max":1,"score":0.1}
{"image_id":"a","x_min":0,"y_min":0,"x_max":1,"y_max":1,"score":0.2}
{"image_id":"b","x_min":0,"y_min":0,"x_max":1,"y_max":1,"score":0.3}
)");
  const auto g = group_by_image(recs);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].first.text, "b");
  EXPECT_EQ(g[0].second[1].score, 0.3);
}

TEST(Eval, UnknownPredictionImageIsInputError) {
  GroundTruth gt;
  gt.images.push_back({{"1", true}, "", "", 0, 0, {}});
  const auto preds = parse_detections_jsonl(R"({"image_id":2,"x_min":0,"y_min":0,"x_max":1,"y_max":1,"score":0.5})");
  EXPECT_THROW(join_for_eval(gt, preds), InputError);
}

TEST(Annotations, NormalizedJson) {
  const auto gt = load_annotations(UTD_FIXTURES "/annotations.csv", AnnotationFormat::csv_jsonboxes);
  const auto j = annotations_to_json(gt);
  EXPECT_EQ(j["images"].size(), 3u);
  EXPECT_EQ(j["images"][0]["boxes"][0]["x_max"], 40.0);
  EXPECT_EQ(j["images"][0]["image_id"], "frame_000");
}

TEST(Annotations, FormatNames) {
  EXPECT_EQ(parse_annotation_format("coco_json"), AnnotationFormat::coco_json);
  EXPECT_EQ(parse_annotation_format("auto"), AnnotationFormat::auto_detect);
  EXPECT_THROW(load_annotations(UTD_FIXTURES "/does_not_exist.json"), InputError);
}
