#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "objattr/evaluation.hpp"
#include "objattr/search.hpp"
#include "objattr/synthetic.hpp"
#include "test_util.hpp"

namespace objattr {
namespace {

StepCurve make_curve(std::vector<int> steps, std::vector<double> values) {
  StepCurve c;
  c.steps = std::move(steps);
  c.values = std::move(values);
  return c;
}

TEST(Auc, ConstantCurve) {
  for (double v : {0.0, 0.3, 1.0}) {
    EXPECT_NEAR(auc(make_curve({0, 1, 2, 3, 4, 5, 6, 7}, std::vector<double>(8, v))), v, 1e-12);
  }
}

TEST(Auc, LinearRamp) {
  std::vector<int> t;
  std::vector<double> v;
  for (int i = 0; i <= 16; ++i) {
    t.push_back(i);
    v.push_back(i / 16.0);
  }
  EXPECT_NEAR(auc(make_curve(t, v)), 0.5, 1e-12);
}

TEST(Auc, TwoTrapezoids) {
  EXPECT_NEAR(auc(make_curve({0, 5, 10}, {0, 0.4, 1.0})), 0.45, 1e-12);
}

TEST(Auc, RedundantCollinearStepsDoNotChangeTheArea) {
  const double coarse = auc(make_curve({0, 4, 8}, {0.2, 0.6, 0.4}));
  const double fine = auc(make_curve({0, 2, 4, 6, 8}, {0.2, 0.4, 0.6, 0.5, 0.4}));
  EXPECT_NEAR(coarse, fine, 1e-12);
}

TEST(Auc, RejectsMalformedCurves) {
  EXPECT_THROW(auc(make_curve({1, 2}, {0, 0})), InvalidInput);
  EXPECT_THROW(auc(make_curve({0, 2, 2}, {0, 0, 0})), InvalidInput);
  EXPECT_THROW(auc(make_curve({0}, {0})), InvalidInput);
  EXPECT_THROW(auc(make_curve({0, 1}, {0})), InvalidInput);
}

TEST(AverageHighestScore, Examples) {
  EXPECT_EQ(average_highest_score(std::vector<BoxResponse>{{0.36, 0.9, 0.4, true}}), 0.0);
  const std::vector<BoxResponse> steps{
      {0.36, 0.9, 0.4, true}, {0.42, 0.6, 0.7, true}, {0.56, 0.7, 0.8, true}};
  EXPECT_DOUBLE_EQ(average_highest_score(steps), 0.7);
  EXPECT_EQ(average_highest_score(std::vector<BoxResponse>{{1, 1, 1, true}}), 1.0);
}

SaliencyMap map_of(int h, int w, std::vector<double> v) { return {h, w, std::move(v)}; }

TEST(PointGame, IndicatorInsideBox) {
  std::vector<double> v(100, 0.0);
  for (int y = 3; y < 6; ++y) {
    for (int x = 4; x < 7; ++x) v[y * 10 + x] = 1.0;
  }
  EXPECT_EQ(point_game(map_of(10, 10, v), {2, 2, 8, 8}), 1);
}

TEST(PointGame, MaxOutsideBox) {
  std::vector<double> v(100, 0.1);
  v[9 * 10 + 9] = 0.9;
  EXPECT_EQ(point_game(map_of(10, 10, v), {0, 0, 5, 5}), 0);
}

TEST(PointGame, UniformMapPicksFirstPixel) {
  const auto uniform = map_of(10, 10, std::vector<double>(100, 0.5));
  EXPECT_EQ(point_game(uniform, {1, 0, 10, 10}), 0);
  EXPECT_EQ(point_game(uniform, {0, 0, 1, 1}), 1);
}

TEST(EnergyPointGame, AllMassInside) {
  std::vector<double> v(100, 0.0);
  v[33] = 0.4;
  v[44] = 1.0;
  EXPECT_DOUBLE_EQ(energy_point_game(map_of(10, 10, v), {2, 2, 6, 6}), 1.0);
}

TEST(EnergyPointGame, UniformIsAreaRatio) {
  const auto uniform = map_of(10, 20, std::vector<double>(200, 0.3));
  EXPECT_NEAR(energy_point_game(uniform, {0, 0, 5, 4}), 20.0 / 200.0, 1e-12);
}

TEST(EnergyPointGame, HalfMass) {
  // Two regions: left half weight 1, right half weight 1; box covers the left half.
  const auto part = grid_partition(8, 8, 1, 2);
  const auto map = rasterize(part, std::vector<int>{0, 1}, std::vector<double>{1.0, 1.0});
  EXPECT_DOUBLE_EQ(energy_point_game(map, {0, 0, 4, 8}), 0.5);
}

TEST(EnergyPointGame, AllZeroIsUndefined) {
  EXPECT_THROW(energy_point_game(map_of(3, 3, std::vector<double>(9, 0.0)), {0, 0, 1, 1}),
               UndefinedMetric);
}

class BlobCurves : public ::testing::Test {
 protected:
  // 32x32 image, 4x4 grid of 8 px cells. Blob (4,4)-(20,20) touches cells 0,1,2,4,5,6,8,9,10.
  Image image = testing::textured_image(32, 32, 12);
  RegionPartition part = grid_partition(32, 32, 4, 4);
  BBox blob{4, 4, 20, 20};
  BlobDetector det{testing::single_blob(blob, "dog", 1.0)};
  ExplanationTarget target{blob, "dog"};
  std::vector<int> order{5, 0, 10, 1, 4, 6, 9, 2, 8, 3, 7, 11, 12, 13, 14, 15};
};

TEST_F(BlobCurves, InsertionMatchesAnalyticBlobFormula) {
  const StepCurve c = curve(det, image, part, order, target, Direction::insertion, Variant::clue);
  ASSERT_EQ(c.steps.size(), 17u);
  RegionSet shown(16);
  double last = -1;
  for (int t = 0; t <= 16; ++t) {
    if (t > 0) shown.insert(order[t - 1]);
    const auto o = testing::blob_oracle(reveal(image, part, shown), 4, 4, 20, 20);
    const double expected = o.any ? testing::cell_iou(o.visible_box, blob) * o.visible_fraction : 0;
    EXPECT_NEAR(c.values[t], expected, 1e-12) << "T=" << t;
    EXPECT_GE(c.values[t], last);
    last = c.values[t];
  }
  EXPECT_DOUBLE_EQ(c.values[16], 1.0);
}

TEST_F(BlobCurves, EndpointsMatchFullAndEmptyImages) {
  for (Variant v : {Variant::clue, Variant::class_score, Variant::iou}) {
    const StepCurve ins = curve(det, image, part, order, target, Direction::insertion, v);
    const StepCurve del = curve(det, image, part, order, target, Direction::deletion, v);
    EXPECT_EQ(del.values.back(), 0.0);
    EXPECT_EQ(ins.values.front(), 0.0);
    const BoxResponse full = best_response(det.detect(image), target);
    const double expected = v == Variant::clue ? full.product
                            : v == Variant::class_score ? full.class_score
                                                        : full.iou;
    EXPECT_EQ(ins.values.back(), expected);
    EXPECT_EQ(del.values.front(), expected);
  }
}

TEST_F(BlobCurves, VariantsSplitTheProduct) {
  const ResponseCurve r =
      response_curve(det, image, part, order, target, Direction::insertion);
  const StepCurve clue = select_variant(r, Variant::clue);
  const StepCurve cls = select_variant(r, Variant::class_score);
  const StepCurve io = select_variant(r, Variant::iou);
  for (std::size_t i = 0; i < clue.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(clue.values[i], cls.values[i] * io.values[i]);
  }
}

TEST_F(BlobCurves, InsertionAndDeletionAreNotCoupled) {
  // A symmetric detector on complementary reveals does not force ins + del = 1.
  const auto ins = auc(curve(det, image, part, order, target, Direction::insertion, Variant::clue));
  const auto del = auc(curve(det, image, part, order, target, Direction::deletion, Variant::clue));
  EXPECT_GT(std::abs(ins + del - 1.0), 1e-3);
}

TEST_F(BlobCurves, ParallelCurveMatchesSequential) {
  const auto a = response_curve(det, image, part, order, target, Direction::deletion, 0, 1);
  const auto b = response_curve(det, image, part, order, target, Direction::deletion, 0, 4);
  ASSERT_EQ(a.responses.size(), b.responses.size());
  for (std::size_t i = 0; i < a.responses.size(); ++i) {
    EXPECT_EQ(a.responses[i].product, b.responses[i].product);
  }
}

TEST_F(BlobCurves, RejectsPartialOrder) {
  EXPECT_THROW(curve(det, image, part, std::vector<int>{0, 1, 2}, target, Direction::insertion,
                     Variant::clue),
               InvalidInput);
}

TEST(Esr, BlobInsideTopRegion) {
  const Image image = testing::textured_image(32, 32, 1);
  const auto part = grid_partition(32, 32, 4, 4);
  const BBox blob{9, 9, 15, 15};  // inside cell 5
  const BlobDetector det(testing::single_blob(blob));
  std::vector<int> order{5, 0, 1, 2, 3, 4, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  const auto r = esr(det, image, part, order, {blob, "dog"}, 0.35, 16);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.minimal_t, 1);
}

TEST(Esr, WrongCategoryNeverSucceeds) {
  const Image image = testing::textured_image(16, 16, 1);
  const auto part = grid_partition(16, 16, 2, 2);
  const BlobDetector det(testing::single_blob({0, 0, 16, 16}, "cat"));
  const auto r = esr(det, image, part, std::vector<int>{0, 1, 2, 3}, {{0, 0, 16, 16}, "dog"},
                     0.35, 4);
  EXPECT_FALSE(r.success);
  EXPECT_FALSE(r.minimal_t.has_value());
}

/// Analytic ESR for a one-object world on an 8 px grid: per prefix, score
/// = v^p (1 - w u) from pixel counts and IoU from the visible extent.
std::optional<int> analytic_esr(const Image& image, const RegionPartition& part,
                                const BlobObject& obj, std::span<const int> order,
                                const BBox& target, double thr, int budget) {
  RegionSet shown(part.region_count());
  for (int t = 1; t <= budget; ++t) {
    shown.insert(order[t - 1]);
    const Image r = reveal(image, part, shown);
    const auto o = testing::blob_oracle(r, int(obj.region.x1), int(obj.region.y1),
                                        int(obj.region.x2), int(obj.region.y2));
    if (!o.any) continue;
    double u = 0;
    if (obj.inhibitor) {
      const auto& ib = obj.inhibitor->region;
      u = testing::blob_oracle(r, int(ib.x1), int(ib.y1), int(ib.x2), int(ib.y2)).visible_fraction;
    }
    const double w = obj.inhibitor ? obj.inhibitor->weight : 0.0;
    const double score = std::pow(o.visible_fraction, obj.exponent) * (1 - w * u);
    if (testing::cell_iou(o.visible_box, target) > 0.5 && score >= thr) return t;
  }
  return std::nullopt;
}

TEST(Esr, InhibitorWorldMatchesAnalyticPrefix) {
  const Image image = testing::textured_image(32, 32, 2);
  const auto part = grid_partition(32, 32, 4, 4);
  // Object on cells 0 and 1; inhibitor on cells 2 and 3.
  BlobObject obj{{0, 0, 16, 8}, "dog", 1.0, Inhibitor{{16, 0, 32, 8}, 0.9}};
  const BlobDetector det(BlobWorld{{obj}});
  const ExplanationTarget target{obj.region, "dog"};

  // Inhibitor fully visible caps the score at 0.1; half visible gives 0.55.
  const std::vector<int> inhibitor_first{2, 3, 0, 1, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  const auto fail = esr(det, image, part, inhibitor_first, target, 0.35, 16);
  EXPECT_FALSE(fail.success);
  EXPECT_EQ(analytic_esr(image, part, obj, inhibitor_first, obj.region, 0.35, 16), std::nullopt);

  const std::vector<int> object_first{2, 4, 0, 1, 3, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  const auto ok = esr(det, image, part, object_first, target, 0.35, 16);
  EXPECT_TRUE(ok.success);
  EXPECT_EQ(ok.minimal_t, 4);
  EXPECT_EQ(ok.minimal_t, analytic_esr(image, part, obj, object_first, obj.region, 0.35, 16));

  const auto budget = esr(det, image, part, object_first, target, 0.35, 3);
  EXPECT_FALSE(budget.success);

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto order = random_ordering(16, rng);
    const auto got = esr(det, image, part, order, target, 0.35, 16);
    EXPECT_EQ(got.minimal_t, analytic_esr(image, part, obj, order, obj.region, 0.35, 16));
  }
}

TEST(Esr, RejectsBadArguments) {
  const Image image(8, 8, 1);
  const auto part = grid_partition(8, 8, 2, 2);
  const BlobDetector det(testing::single_blob({0, 0, 8, 8}));
  const std::vector<int> order{0, 1, 2, 3};
  EXPECT_THROW(esr(det, image, part, order, {{0, 0, 8, 8}, "dog"}, 0.0, 4), InvalidInput);
  EXPECT_THROW(esr(det, image, part, order, {{0, 0, 8, 8}, "dog"}, 0.5, 5), InvalidInput);
}

TEST(MetricReport, FullBatteryOnBlobSample) {
  SuiteSpec spec;
  spec.samples = 1;
  spec.seed = 4;
  const auto s = make_blob_suite(spec).front();
  const BlobDetector det(s.world);
  const auto r = greedy_search(det, s.image, s.partition, s.target);
  const MetricReport m = evaluate_metrics(det, s.image, s.partition, r.order, r.saliency, s.target);
  for (double v : {m.insertion_clue, m.deletion_clue, m.insertion_class, m.deletion_class,
                   m.insertion_iou, m.deletion_iou, m.avg_highest_score}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GT(m.insertion_clue, m.deletion_clue);
  EXPECT_EQ(m.avg_highest_score, 1.0);
  ASSERT_TRUE(m.point_game.has_value());
  EXPECT_EQ(*m.point_game, point_game(r.saliency, s.target.box));
  ASSERT_TRUE(m.esr.has_value());
  EXPECT_TRUE(m.esr->success);
  EXPECT_DOUBLE_EQ(m.insertion_clue,
                   auc(curve(det, s.image, s.partition, r.order, s.target, Direction::insertion,
                             Variant::clue)));

  const auto j = metrics_to_json(m);
  EXPECT_EQ(j.at("point_game"), *m.point_game);
  EXPECT_EQ(j.at("insertion").get<double>(), m.insertion_clue);
  EXPECT_EQ(metric_values(m).size(), metric_columns().size());
}

TEST(MetricReport, TogglesSkipMetrics) {
  const Image image = testing::textured_image(8, 8);
  const auto part = grid_partition(8, 8, 2, 2);
  const BlobDetector det(testing::single_blob({0, 0, 4, 4}));
  CountingDetector counter(det);
  MetricOptions opt;
  opt.faithfulness = false;
  opt.explaining_success = false;
  const SaliencyMap zero{8, 8, std::vector<double>(64, 0.0)};
  const auto m = evaluate_metrics(counter, image, part, std::vector<int>{0, 1, 2, 3}, zero,
                                  {{0, 0, 4, 4}, "dog"}, opt);
  EXPECT_EQ(counter.calls(), 0);
  EXPECT_FALSE(m.esr.has_value());
  EXPECT_FALSE(m.energy_pg.has_value());
  EXPECT_TRUE(m.point_game.has_value());
}

TEST(CurvePlot, DrawsCurvesOnWhite) {
  const std::vector<StepCurve> curves{make_curve({0, 1, 2}, {0, 0.5, 1}),
                                      make_curve({0, 1, 2}, {1, 0.5, 0})};
  const Image img = render_curve_plot(curves, 120, 160);
  EXPECT_EQ(img.height(), 120);
  EXPECT_EQ(img.width(), 160);
  int coloured = 0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) coloured += img.differs_from(i, 255);
  EXPECT_GT(coloured, 100);
}

}  // namespace
}  // namespace objattr
