#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"
#include "utd/anchors.hpp"

using namespace utd;

TEST(AnchorShapes, SimpleCases) {
  AnchorSpec s;
  s.base_areas = {100, 200, 300, 400};
  s.aspect_ratios = {1, 2, 4};
  const auto shapes = anchor_shapes(s);
  EXPECT_DOUBLE_EQ(shapes[0].width, 10);
  EXPECT_DOUBLE_EQ(shapes[0].height, 10);
  EXPECT_DOUBLE_EQ(shapes[2].width, 20);
  EXPECT_DOUBLE_EQ(shapes[2].height, 5);
}

TEST(AnchorShapes, DefaultSpecRoundTrips) {
  const AnchorSpec s;
  const auto shapes = anchor_shapes(s);
  ASSERT_EQ(shapes.size(), 12u);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t r = 0; r < 3; ++r) {
      const auto& sh = shapes[a * 3 + r];
      EXPECT_NEAR(sh.width * sh.height, s.base_areas[a], 1e-9 * s.base_areas[a]);
      EXPECT_NEAR(sh.width / sh.height, s.aspect_ratios[r], 1e-12);
    }
  EXPECT_DOUBLE_EQ(shapes[4].width, 64.0);  // 64^2 area, ratio 1
}

TEST(AnchorSpec, Validation) {
  AnchorSpec s;
  s.base_areas = {100, 100, 300, 400};
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.aspect_ratios = {2, 1, 0.5};
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.base_areas[0] = -1;
  EXPECT_THROW(anchor_shapes(s), ConfigError);
}

TEST(Grid, Counts) {
  const AnchorSpec s;
  EXPECT_EQ(generate_grid(s, 64, 64, 32).size(), 48u);
  EXPECT_EQ(generate_grid(s, 96, 64, 32).size(), 72u);
  const auto g = generate_grid(s, 65, 33, 32);
  EXPECT_EQ(g.grid_w, 3);
  EXPECT_EQ(g.grid_h, 2);
  EXPECT_EQ(g.size(), static_cast<std::size_t>(g.grid_w * g.grid_h * 12));
}

TEST(Grid, CentersAndOverhang) {
  const auto g = generate_grid(AnchorSpec{}, 16, 16, 32);
  ASSERT_EQ(g.size(), 12u);
  for (const auto& a : g.anchors) {
    EXPECT_DOUBLE_EQ(a.center_x(), 16.0);
    EXPECT_DOUBLE_EQ(a.center_y(), 16.0);
  }
  EXPECT_LT(g.anchors.back().x_min, 0.0);  // not clipped
  const auto g2 = generate_grid(AnchorSpec{}, 96, 64, 32);
  const Box& a = g2.anchors[((1 * 3) + 2) * 12 + 5];
  EXPECT_DOUBLE_EQ(a.center_x(), 2.5 * 32);
  EXPECT_DOUBLE_EQ(a.center_y(), 1.5 * 32);
}

TEST(Grid, Errors) {
  EXPECT_THROW(generate_grid(AnchorSpec{}, 0, 10, 8), InputError);
  EXPECT_THROW(generate_grid(AnchorSpec{}, 10, 10, 0), ConfigError);
}

TEST(Assign, IdenticalAnchorIsPositive) {
  AnchorGrid g;
  g.anchors = {{0, 0, 10, 10}, {50, 50, 60, 60}};
  const auto l = assign_targets(g, {{0, 0, 10, 10}}, 0.5, 0.4);
  EXPECT_EQ(l[0].kind, AnchorLabel::Kind::positive);
  EXPECT_EQ(l[0].gt_index, 0);
  EXPECT_EQ(l[1].kind, AnchorLabel::Kind::negative);
}

TEST(Assign, EmptyGtAllNegative) {
  const auto g = generate_grid(AnchorSpec{}, 64, 64, 32);
  for (const auto& l : assign_targets(g, {}, 0.5, 0.4)) EXPECT_EQ(l.kind, AnchorLabel::Kind::negative);
}

TEST(Assign, ThresholdBands) {
  AnchorGrid g;
  g.anchors = {{0, 0, 10, 6}, {0, 0, 10, 3}, {0, 0, 10, 4.5}};  // IoU 0.6, 0.3, 0.45
  const auto l = assign_targets(g, {{0, 0, 10, 10}}, 0.5, 0.4);
  EXPECT_EQ(l[0].kind, AnchorLabel::Kind::positive);
  EXPECT_EQ(l[1].kind, AnchorLabel::Kind::negative);
  EXPECT_EQ(l[2].kind, AnchorLabel::Kind::ignore);
}

TEST(Assign, ForceMatchTieTakesLowestIndex) {
  AnchorGrid g;
  g.anchors = {{100, 100, 110, 110}, {0, 0, 4, 4}, {6, 0, 10, 4}};  // both 0.16 with gt
  const auto l = assign_targets(g, {{0, 0, 10, 10}}, 0.9, 0.1);
  EXPECT_EQ(l[1].kind, AnchorLabel::Kind::positive);
  EXPECT_EQ(l[2].kind, AnchorLabel::Kind::ignore);
}

TEST(Assign, ForceMatchSharedBestAnchorGivesEachGtOne) {
  AnchorGrid g;
  g.anchors = {{0, 0, 10, 10}, {0, 0, 20, 20}};
  const std::vector<Box> gts{{0, 0, 9, 9}, {0, 0, 9.5, 9.5}};
  const auto l = assign_targets(g, gts, 0.95, 0.1);
  std::set<int> owners;
  for (const auto& x : l)
    if (x.kind == AnchorLabel::Kind::positive) owners.insert(x.gt_index);
  EXPECT_EQ(owners, (std::set<int>{0, 1}));
}

TEST(Assign, BadThresholds) {
  AnchorGrid g;
  EXPECT_THROW(assign_targets(g, {}, 0.3, 0.4), ConfigError);
}

TEST(Assign, EveryGtOwnsAPositive) {
  SeededRng rng(12);
  const auto g = generate_grid(AnchorSpec{}, 256, 256, 32);
  for (int scene = 0; scene < 50; ++scene) {
    std::vector<Box> gts;
    const int n = static_cast<int>(rng.uniform_int(1, 10));
    for (int i = 0; i < n; ++i) gts.push_back(utd::testing::random_box(rng, 0, 256, 4));
    const auto labels = assign_targets(g, gts, 0.7, 0.3);
    std::vector<int> count(gts.size(), 0);
    for (const auto& l : labels)
      if (l.kind == AnchorLabel::Kind::positive) ++count[static_cast<std::size_t>(l.gt_index)];
    for (int c : count) EXPECT_GE(c, 1);
  }
}

TEST(Sampler, GoldenSeed7) {
  const auto b = sample_background_boxes({40, 40, 60, 60}, 100, 100, 4, 7);
  const std::vector<Box> expect{{84.93012022972107, 54.69657123088837, 104.93012022972107, 74.69657123088837},
                                {-4.349137485027313, 31.101863145828247, 15.650862514972687, 51.10186314582825},
                                {80.07104760408401, 60.286322712898254, 100.07104760408401, 80.28632271289825},
                                {65.57450342178345, 73.8475512266159, 85.57450342178345, 93.8475512266159}};
  ASSERT_EQ(b.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(b[i], expect[i]) << i;
}

TEST(Sampler, MarginStripConstrainsCenters) {
  const Box gt{0, 0, 99, 100};
  for (const auto& b : sample_background_boxes(gt, 100, 100, 200, 1)) {
    EXPECT_GE(b.center_x(), 99.0);
    EXPECT_LE(b.center_x(), 100.0);
    EXPECT_EQ(b.width(), 99.0);
    EXPECT_EQ(b.height(), 100.0);
  }
}

TEST(Sampler, Errors) {
  EXPECT_THROW(sample_background_boxes({0, 0, 10, 10}, 10, 10, 4, 1), InputError);
  EXPECT_THROW(sample_background_boxes({0, 0, 5, 5}, 10, 10, 0, 1), ConfigError);
  EXPECT_THROW(sample_background_boxes({0, 0, 0, 5}, 10, 10, 1, 1), InputError);
}

TEST(Sampler, ArbitraryGtKeepsSizeToRounding) {
  SeededRng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Box gt = utd::testing::random_box(rng, 0, 640, 2);
    for (const auto& b : sample_background_boxes(gt, 640, 640, 5, static_cast<std::uint64_t>(i))) {
      EXPECT_NEAR(b.width(), gt.width(), 1e-9);
      EXPECT_NEAR(b.height(), gt.height(), 1e-9);
      const bool inside = b.center_x() > gt.x_min && b.center_x() < gt.x_max && b.center_y() > gt.y_min &&
                          b.center_y() < gt.y_max;
      EXPECT_FALSE(inside);
    }
  }
}
