#include <gtest/gtest.h>

#include <map>
#include <random>

#include "properties.hpp"
#include "texanno/errors.hpp"
#include "texanno/evaluation.hpp"

using namespace texanno;
using namespace texanno::testing;

namespace {

ClassMask mask_with(int w, int h, std::size_t n_set, std::size_t offset = 0) {
  ClassMask m("a", w, h);
  for (std::size_t i = 0; i < n_set; ++i) m.bits[offset + i] = 1;
  return m;
}

EvalCell cell(const std::string& img, const std::string& cls, std::uint64_t p, std::uint64_t t, std::uint64_t c) {
  return {img, cls, {p, t, c}};
}

}  // namespace

TEST(Rasterize, Square) {
  const auto m = rasterize_hull(rect_polygon({0, 0, 10, 10}), 20, 20);
  EXPECT_EQ(m.count(), 100u);
}

TEST(Rasterize, TriangleMatchesCenterOracle) {
  const Polygon tri{{{0, 0}, {4, 0}, {0, 4}}};
  const auto m = rasterize_hull(tri, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      // Center (x+.5, y+.5) inside or on x + y <= 4.
      const bool in = (x + 0.5) + (y + 0.5) <= 4.0;
      EXPECT_EQ(m.bits[y * 4 + x] != 0, in) << x << "," << y;
    }
}

TEST(Rasterize, OutsideCanvas) {
  EXPECT_EQ(rasterize_hull(rect_polygon({100, 100, 120, 130}), 50, 50).count(), 0u);
  EXPECT_EQ(rasterize_hull(rect_polygon({40, 40, 120, 130}), 50, 50).count(), 100u);
}

TEST(Rasterize, RandomHullsMatchCenterOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> c(-10, 40);
  for (int t = 0; t < 100; ++t) {
    std::vector<Point> pts(8);
    for (auto& p : pts) p = {c(rng), c(rng)};
    Polygon hull;
    try {
      hull = convex_hull(pts);
    } catch (const Error&) {
      continue;
    }
    const auto m = rasterize_hull(hull, 32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        // Doubled coordinates keep the center test in integers.
        bool in = true;
        const auto& v = hull.vertices;
        for (std::size_t i = 0; i < v.size(); ++i) {
          const Point a{2 * v[i].x, 2 * v[i].y}, b{2 * v[(i + 1) % v.size()].x, 2 * v[(i + 1) % v.size()].y};
          if (orientation(a, b, {2 * x + 1, 2 * y + 1}) < 0) in = false;
        }
        ASSERT_EQ(m.bits[y * 32 + x] != 0, in);
      }
  }
}

TEST(PixelMetrics, Identical) {
  const auto m = mask_with(20, 20, 50);
  const auto pr = pixel_precision_recall(m, m);
  EXPECT_DOUBLE_EQ(*pr.precision, 1.0);
  EXPECT_DOUBLE_EQ(*pr.recall, 1.0);
}

TEST(PixelMetrics, Ratio) {
  // P = pixels [0,100), T = [40,160): overlap 60.
  const auto p = mask_with(20, 20, 100, 0), t = mask_with(20, 20, 120, 40);
  const auto c = pixel_counts(p, t);
  EXPECT_EQ(c.predicted, 100u);
  EXPECT_EQ(c.truth, 120u);
  EXPECT_EQ(c.correct, 60u);
  const auto pr = pixel_precision_recall(p, t);
  EXPECT_DOUBLE_EQ(*pr.precision, 0.6);
  EXPECT_DOUBLE_EQ(*pr.recall, 0.5);
}

TEST(PixelMetrics, DisjointAndUndefined) {
  const auto pr = pixel_precision_recall(mask_with(20, 20, 10, 0), mask_with(20, 20, 10, 100));
  EXPECT_DOUBLE_EQ(*pr.precision, 0.0);
  EXPECT_DOUBLE_EQ(*pr.recall, 0.0);
  const auto empty = pixel_precision_recall(mask_with(20, 20, 0), mask_with(20, 20, 0));
  EXPECT_FALSE(empty.precision.has_value());
  EXPECT_FALSE(empty.recall.has_value());
  EXPECT_THROW(pixel_counts(mask_with(20, 20, 0), mask_with(21, 20, 0)), Error);
}

TEST(Aggregate, MeanOverImages) {
  const std::vector<EvalCell> cells{cell("i1", "a", 10, 10, 10), cell("i2", "a", 10, 10, 5)};
  const auto agg = aggregate(cells);
  EXPECT_DOUBLE_EQ(agg.mAP, 0.75);
  EXPECT_DOUBLE_EQ(agg.per_class.at("a").mean_precision.value(), 0.75);
}

TEST(Aggregate, AbsentClassExcludedFromRecall) {
  const std::vector<EvalCell> cells{cell("i1", "a", 10, 10, 5), cell("i1", "b", 10, 0, 0)};
  const auto agg = aggregate(cells);
  EXPECT_DOUBLE_EQ(agg.mAR, 0.5);
  EXPECT_DOUBLE_EQ(agg.mAP, 0.25);
  EXPECT_FALSE(agg.per_class.at("b").mean_recall.has_value());
}

TEST(Aggregate, BackgroundIgnoredAndEmptyThrows) {
  const std::vector<EvalCell> only_bg{cell("i1", "background", 10, 10, 10)};
  try {
    aggregate(only_bg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyReport);
  }
  EXPECT_THROW(aggregate(std::vector<EvalCell>{cell("i1", "a", 0, 0, 0)}), Error);
}

TEST(Aggregate, RandomFixtureMatchesRecount) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalCell> cells;
    const char* classes[] = {"a", "b", "c"};
    for (int img = 0; img < 5; ++img)
      for (const char* cls : classes) {
        const auto p = random_mask(rng, cls, 12, 12, rng() % 3 ? 0.4 : 0.0);
        const auto t = random_mask(rng, cls, 12, 12, rng() % 3 ? 0.4 : 0.0);
        cells.push_back({"i" + std::to_string(img), cls, pixel_counts(p, t)});
        // Recount correct pixels from the bitmaps.
        std::uint64_t correct = 0;
        for (std::size_t i = 0; i < p.bits.size(); ++i) correct += p.bits[i] && t.bits[i];
        ASSERT_EQ(cells.back().counts.correct, correct);
      }
    std::map<std::string, std::vector<double>> ps, rs;
    for (const auto& c : cells) {
      if (c.counts.predicted) ps[c.class_id].push_back(double(c.counts.correct) / double(c.counts.predicted));
      if (c.counts.truth) rs[c.class_id].push_back(double(c.counts.correct) / double(c.counts.truth));
    }
    auto mean_of_means = [](const std::map<std::string, std::vector<double>>& m) {
      double total = 0;
      for (const auto& [k, v] : m) total += std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
      return m.empty() ? 0.0 : total / double(m.size());
    };
    if (ps.empty() && rs.empty()) continue;
    const auto agg = aggregate(cells);
    EXPECT_NEAR(agg.mAP, mean_of_means(ps), 1e-12);
    EXPECT_NEAR(agg.mAR, mean_of_means(rs), 1e-12);
  }
}

TEST(EvaluateImage, SameClassHullsAreMerged) {
  const std::vector<LabeledHull> hulls{{"a", rect_polygon({0, 0, 10, 10})}, {"a", rect_polygon({5, 0, 15, 10})},
                                       {"b", rect_polygon({0, 10, 5, 20})}};
  ClassMask truth_a("a", 20, 20);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) truth_a.bits[y * 20 + x] = 1;
  const std::vector<ClassMask> truth{truth_a};
  const auto cells = evaluate_image("i", hulls, truth, 20, 20);
  ASSERT_EQ(cells.size(), 2u);
  std::map<std::string, PixelCounts> by;
  for (const auto& c : cells) by[c.class_id] = c.counts;
  EXPECT_EQ(by["a"].predicted, 150u);
  EXPECT_EQ(by["a"].truth, 200u);
  EXPECT_EQ(by["a"].correct, 150u);
  EXPECT_EQ(by["b"].predicted, 50u);
  EXPECT_EQ(by["b"].truth, 0u);
}

TEST(ClassifierMetrics, Perfect) {
  const std::vector<std::size_t> y{0, 1, 2, 1, 0};
  const auto m = classifier_metrics({"a", "b", "c"}, y, y);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(*m.mean_per_class_precision, 1.0);
  for (const auto& p : m.per_class_precision) EXPECT_DOUBLE_EQ(*p, 1.0);
}

TEST(ClassifierMetrics, ConstantPredictor) {
  const std::vector<std::size_t> truth{0, 1, 0, 1}, pred{0, 0, 0, 0};
  const auto m = classifier_metrics({"a", "b"}, truth, pred);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(*m.per_class_precision[0], 0.5);
  EXPECT_FALSE(m.per_class_precision[1].has_value());
  EXPECT_DOUBLE_EQ(*m.mean_per_class_precision, 0.5);
}

TEST(ClassifierMetrics, KnownConfusion) {
  // Confusion [truth][pred]:
  //   a: 3 a, 1 b, 0 c
  //   b: 1 a, 2 b, 1 c
  //   c: 0 a, 0 b, 2 c
  const std::vector<std::uint64_t> table[3] = {{3, 1, 0}, {1, 2, 1}, {0, 0, 2}};
  std::vector<std::size_t> truth, pred;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t p = 0; p < 3; ++p)
      for (std::uint64_t n = 0; n < table[t][p]; ++n) {
        truth.push_back(t);
        pred.push_back(p);
      }
  const auto m = classifier_metrics({"a", "b", "c"}, truth, pred);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(m.confusion[t], table[t]);
  EXPECT_DOUBLE_EQ(m.accuracy, 7.0 / 10.0);
  EXPECT_DOUBLE_EQ(*m.per_class_precision[0], 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(*m.per_class_precision[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*m.per_class_precision[2], 2.0 / 3.0);
  EXPECT_NEAR(*m.mean_per_class_precision, (0.75 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0, 1e-15);
}

TEST(Report, JsonRoundTripAndSummary) {
  EvalReport r;
  r.method = "patch-softmax";
  r.cells = {cell("i1", "a", 10, 20, 5)};
  r.segmentation = aggregate(r.cells);
  r.classification = classifier_metrics({"a", "b"}, std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 0});
  const auto back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  EXPECT_EQ(back.method, r.method);
  EXPECT_DOUBLE_EQ(back.segmentation.mAP, r.segmentation.mAP);
  EXPECT_DOUBLE_EQ(back.segmentation.mAR, r.segmentation.mAR);
  ASSERT_EQ(back.cells.size(), 1u);
  EXPECT_EQ(back.cells[0].counts.correct, 5u);
  ASSERT_TRUE(back.classification.has_value());
  EXPECT_DOUBLE_EQ(back.classification->accuracy, 0.5);
  const auto table = r.summary_table();
  EXPECT_NE(table.find("patch-softmax"), std::string::npos);
  EXPECT_NE(table.find("mAP"), std::string::npos);
  EXPECT_NE(table.find("mAR"), std::string::npos);
}

TEST(MetricProperties, Random) {
  for (std::uint64_t s = 0; s < 200; ++s) EXPECT_EQ(check_metric_properties(s), "") << s;
}
