#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "catpose/eval.hpp"
#include "catpose/random.hpp"
#include "fixtures.hpp"

using namespace catpose;

namespace {

OrientedBox3 aabb(const Vec3& center, const Vec3& extents) {
  return {RigidPose{Rotation(), center}, extents};
}

OrientedBox3 random_box(RandomEngine& rng) {
  std::uniform_real_distribution<double> c(-0.3, 0.3), e(0.2, 1.0);
  return {RigidPose{random_rotation(rng), Vec3(c(rng), c(rng), c(rng))}, Vec3(e(rng), e(rng), e(rng))};
}

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return Errc::InvalidArgument;
}

DetectionRecord record(const std::string& cat, double conf, const PoseEstimate& pred,
                       const std::optional<PoseEstimate>& gt) {
  return {cat, conf, pred, gt};
}

}  // namespace

TEST(BoxFromEstimate, ScalesCanonicalExtents) {
  const Vec3 ext(0.6, 0.6, std::sqrt(1.0 - 0.72));
  const auto b1 = box_from_estimate(RigidPose{}, 1.0, ext);
  EXPECT_LT((b1.extents - ext).norm(), 1e-15);
  const auto b2 = box_from_estimate(RigidPose{}, 2.0, ext);
  EXPECT_NEAR(b2.volume(), 8.0 * b1.volume(), 1e-15);
  auto rng = make_engine(61, {});
  std::uniform_real_distribution<double> u(0.1, 1.0), s(0.05, 3.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 e = Vec3(u(rng), u(rng), u(rng)).normalized();
    const double sc = s(rng);
    EXPECT_NEAR(box_from_estimate(RigidPose{}, sc, e).extents.norm(), sc, 1e-9);
  }
  EXPECT_EQ(code_of([&] { box_from_estimate(RigidPose{}, 0.0, ext); }), Errc::NonPositiveScale);
}

TEST(Iou, ClosedFormCases) {
  const auto a = aabb(Vec3::Zero(), Vec3::Ones());
  EXPECT_NEAR(iou3d(a, a), 1.0, 1e-12);
  EXPECT_NEAR(iou3d(a, aabb(Vec3(0.5, 0, 0), Vec3::Ones())), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(iou3d(a, aabb(Vec3(5, 0, 0), Vec3::Ones())), 0.0);
  // nested: small cube fully inside
  EXPECT_NEAR(iou3d(a, aabb(Vec3(0.1, 0.1, 0), Vec3::Constant(0.5))), 0.125, 1e-12);
  // touching faces share no volume
  EXPECT_NEAR(iou3d(a, aabb(Vec3(1.0, 0, 0), Vec3::Ones())), 0.0, 1e-12);
  // a cube rotated 45 deg about z against itself: octagon prism
  const OrientedBox3 r{RigidPose{Rotation::about_z(45), Vec3::Zero()}, Vec3::Ones()};
  const double octagon = 2.0 * (std::sqrt(2.0) - 1.0);  // area of the intersection of the two squares
  EXPECT_NEAR(iou3d(a, r), octagon / (2.0 - octagon), 1e-12);
}

TEST(Iou, AxisAlignedOracle) {
  auto rng = make_engine(62, {});
  std::uniform_real_distribution<double> c(-0.5, 0.5), e(0.2, 1.2);
  for (int i = 0; i < 500; ++i) {
    const Vec3 ca(c(rng), c(rng), c(rng)), cb(c(rng), c(rng), c(rng));
    const Vec3 ea(e(rng), e(rng), e(rng)), eb(e(rng), e(rng), e(rng));
    double inter = 1.0;
    for (int k = 0; k < 3; ++k) {
      const double lo = std::max(ca(k) - ea(k) / 2, cb(k) - eb(k) / 2);
      const double hi = std::min(ca(k) + ea(k) / 2, cb(k) + eb(k) / 2);
      inter *= std::max(0.0, hi - lo);
    }
    const double oracle = inter / (ea.prod() + eb.prod() - inter);
    EXPECT_NEAR(iou3d(aabb(ca, ea), aabb(cb, eb)), oracle, 1e-12);
  }
}

TEST(Iou, SymmetricAndRigidInvariant) {
  auto rng = make_engine(63, {});
  for (int i = 0; i < 300; ++i) {
    const auto a = random_box(rng), b = random_box(rng);
    const double ab = iou3d(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(ab, iou3d(b, a), 1e-9);
    const RigidPose g{random_rotation(rng), Vec3(1, -2, 3)};
    const OrientedBox3 ga{g.compose(a.pose), a.extents}, gb{g.compose(b.pose), b.extents};
    EXPECT_NEAR(iou3d(ga, gb), ab, 1e-9);
  }
}

TEST(Iou, MonteCarloAgreement) {
  auto rng = make_engine(64, {});
  for (int i = 0; i < 20; ++i) {
    const auto a = random_box(rng), b = random_box(rng);
    EXPECT_NEAR(iou3d(a, b), iou3d_mc(a, b, 200000, static_cast<std::uint64_t>(i)), 0.01);
  }
  const auto u = aabb(Vec3::Zero(), Vec3::Ones());
  EXPECT_NEAR(iou3d_mc(u, u, 100000, 1), 1.0, 0.01);
  EXPECT_NEAR(iou3d_mc(u, aabb(Vec3(0.5, 0, 0), Vec3::Ones()), 1000000, 2), 1.0 / 3.0, 0.005);
}

TEST(PoseMetrics, Cases) {
  const auto gt = fixture::cube_at();
  const auto perfect = pose_metrics("camera", gt, gt);
  EXPECT_NEAR(perfect.iou, 1.0, 1e-12);
  EXPECT_EQ(perfect.rot_err_deg, 0.0);
  EXPECT_EQ(perfect.trans_err_cm, 0.0);

  const auto rot = fixture::cube_at(Vec3(0, 0, 1), 0.3, Rotation::about_x(10));
  EXPECT_NEAR(pose_metrics("camera", rot, gt).rot_err_deg, 10.0, 1e-12);
  // bowl is symmetric about y: a spin about y costs nothing, a tilt does; the mug handle breaks symmetry
  const auto spun = fixture::cube_at(Vec3(0, 0, 1), 0.3, Rotation::about_y(40));
  EXPECT_NEAR(pose_metrics("bowl", spun, gt).rot_err_deg, 0.0, 1e-12);
  EXPECT_NEAR(pose_metrics("bowl", spun, gt, {false}).rot_err_deg, 40.0, 1e-12);
  EXPECT_NEAR(pose_metrics("mug", spun, gt).rot_err_deg, 40.0, 1e-12);
  EXPECT_NEAR(pose_metrics("bowl", rot, gt).rot_err_deg, 10.0, 1e-12);
  EXPECT_EQ(code_of([] { pose_metrics(DetectionRecord{"mug", 1.0, {}, std::nullopt}); }), Errc::NoGroundTruth);
}

TEST(PoseMetrics, ComposesIndependentCalls) {
  auto rng = make_engine(65, {});
  std::uniform_real_distribution<double> u(-0.05, 0.05), s(0.2, 0.4);
  for (int i = 0; i < 100; ++i) {
    const PoseEstimate gt{RigidPose{random_rotation(rng), Vec3(u(rng), u(rng), 1)}, s(rng), Vec3(0.5, 0.5, std::sqrt(0.5))};
    const PoseEstimate pred{RigidPose{random_rotation(rng), gt.pose.translation + Vec3(u(rng), u(rng), u(rng))}, s(rng),
                            gt.canonical_extents};
    const auto m = pose_metrics(record("laptop", 1.0, pred, gt));
    EXPECT_EQ(m.iou, iou3d(pred.box(), gt.box()));
    EXPECT_EQ(m.rot_err_deg, rotation_error_deg(pred.pose.rotation, gt.pose.rotation));
    EXPECT_EQ(m.trans_err_cm, translation_error_cm(pred.pose.translation, gt.pose.translation));
  }
}

TEST(AveragePrecision, HandCases) {
  const auto gt = fixture::cube_at();
  const auto far = fixture::cube_at(Vec3(1, 0, 1));
  const auto preds = metric_predicates({});
  CategoryRecords all{{record("camera", 0.9, gt, gt), record("camera", 0.8, gt, gt)}, 2};
  EXPECT_NEAR(average_precision(all, preds[0]), 1.0, 1e-15);

  CategoryRecords half{{record("camera", 0.9, gt, gt), record("camera", 0.1, far, gt)}, 2};
  EXPECT_NEAR(average_precision(half, preds[0]), 0.5, 1e-15);

  CategoryRecords none{{record("camera", 0.9, far, gt)}, 3};
  EXPECT_EQ(average_precision(none, preds[0]), 0.0);

  CategoryRecords empty{{}, 0};
  EXPECT_EQ(code_of([&] { average_precision(empty, preds[0]); }), Errc::EmptyRecordSet);
}

TEST(AveragePrecision, ConfidenceRescalingInvariant) {
  auto rng = make_engine(66, {});
  std::uniform_real_distribution<double> u(0, 1), off(-0.2, 0.2);
  for (int t = 0; t < 50; ++t) {
    CategoryRecords a, b;
    a.num_ground_truth = b.num_ground_truth = 15;
    for (int i = 0; i < 20; ++i) {
      const double c = u(rng);
      const auto gt = fixture::cube_at();
      const auto pred = fixture::cube_at(Vec3(off(rng), 0, 1));
      const auto maybe = u(rng) < 0.8 ? std::optional<PoseEstimate>(gt) : std::nullopt;
      a.records.push_back(record("mug", c, pred, maybe));
      b.records.push_back(record("mug", 0.5 * c, pred, maybe));
    }
    for (const auto& p : metric_predicates({})) {
      EXPECT_EQ(average_precision(a, p), average_precision(b, p));
    }
  }
}

TEST(AveragePrecision, MatchesIndependentOracle) {
  auto rng = make_engine(67, {});
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<ScoredRecord> scored;
    std::vector<std::pair<double, bool>> ranked;
    const std::size_t num_gt = 5 + static_cast<std::size_t>(u(rng) * 10);
    std::size_t tps = 0;
    for (int i = 0; i < 12; ++i) {
      const bool hit = u(rng) < 0.6 && tps < num_gt;
      tps += hit;
      const double c = std::round(u(rng) * 20) / 20;  // force confidence ties
      scored.push_back({c, hit ? std::optional<PoseMetrics>(PoseMetrics{1, 0, 0}) : std::nullopt});
      ranked.emplace_back(c, hit);
    }
    const auto pass = [](const PoseMetrics& m) { return m.iou > 0.5; };
    EXPECT_NEAR(average_precision(scored, num_gt, pass), fixture::oracle_ap(ranked, num_gt), 1e-12);
  }
}

TEST(Matching, GreedyByConfidenceWithinImage) {
  const auto m = fixture::ten_record_case();
  const RecordSet rs = match_detections(m.detections, m.ground_truth);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs.at("camera").num_ground_truth, 5u);
  EXPECT_EQ(rs.at("mug").num_ground_truth, 3u);
  EXPECT_EQ(rs.at("camera").records.size(), 5u);
  EXPECT_EQ(rs.at("mug").records.size(), 5u);
  std::size_t matched = 0;
  for (const auto& [cat, recs] : rs)
    for (const auto& r : recs.records) matched += r.ground_truth.has_value();
  // c9 and m9 have no gt image; the second m2 hit finds its gt taken
  EXPECT_EQ(matched, 7u);
}

TEST(Matching, PrefersHigherIouThenNearerCenter) {
  const auto g1 = fixture::cube_at(Vec3(0, 0, 1));
  const auto g2 = fixture::cube_at(Vec3(0.06, 0, 1));
  const std::vector<GroundTruth> gts{{"i", "can", g1}, {"i", "can", g2}};
  // detection sits on g2; it must take g2 even though g1 is listed first
  const std::vector<Detection> dets{{"i", "can", 0.9, g2}};
  const auto rs = match_detections(dets, gts);
  ASSERT_TRUE(rs.at("can").records[0].ground_truth);
  EXPECT_EQ(rs.at("can").records[0].ground_truth->pose.translation, g2.pose.translation);

  // far from both: zero IoU everywhere, nearest center wins
  const std::vector<Detection> far{{"i", "can", 0.9, fixture::cube_at(Vec3(0.5, 0, 1))}};
  const auto rf = match_detections(far, gts);
  ASSERT_TRUE(rf.at("can").records[0].ground_truth);
  EXPECT_EQ(rf.at("can").records[0].ground_truth->pose.translation, g2.pose.translation);
}

TEST(MetricTable, TenRecordFixtureMatchesSpreadsheet) {
  const auto m = fixture::ten_record_case();
  const auto table = metric_table(match_detections(m.detections, m.ground_truth));
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[0].category, "camera");
  EXPECT_EQ(table.rows[1].category, "mug");
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(table.rows[0].ap[j], fixture::kCameraAp[j], 1e-12) << kMetricColumns[j];
    EXPECT_NEAR(table.rows[1].ap[j], fixture::kMugAp[j], 1e-12) << kMetricColumns[j];
    EXPECT_EQ(format_fixed(100 * table.mean.ap[j], 1), fixture::kMeanPercent[j]);
  }
  EXPECT_TRUE(table.warnings.empty());
}

TEST(MetricTable, CsvAndTextLayout) {
  const auto m = fixture::ten_record_case();
  const auto table = metric_table(match_detections(m.detections, m.ground_truth));
  const std::string csv = table.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "category,IoU50,IoU75,10cm,10°,10°10cm");
  EXPECT_NE(csv.find("camera,45.0,20.0,45.0,38.7,26.7\n"), std::string::npos);
  EXPECT_NE(csv.find("mug,66.7,16.7,91.7,91.7,91.7\n"), std::string::npos);
  EXPECT_NE(csv.find("mean,55.8,18.3,68.3,65.2,59.2\n"), std::string::npos);

  // every text line has the same number of code points
  std::istringstream text(table.to_text());
  std::string line;
  std::size_t width = 0;
  int lines = 0;
  while (std::getline(text, line)) {
    std::size_t cps = 0;
    for (unsigned char ch : line) cps += (ch & 0xC0) != 0x80;
    if (width == 0) width = cps;
    EXPECT_EQ(cps, width) << line;
    ++lines;
  }
  EXPECT_EQ(lines, 4);
}

TEST(MetricTable, PerfectPredictionsGiveHundred) {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  int i = 0;
  for (const char* cat : {"bottle", "bowl", "camera", "can", "laptop", "mug"}) {
    for (int k = 0; k < 3; ++k, ++i) {
      const auto e = fixture::cube_at(Vec3(0.01 * i, 0, 1), 0.2 + 0.01 * k, Rotation::about_x(7.0 * i));
      gts.push_back({std::to_string(i), cat, e});
      dets.push_back({std::to_string(i), cat, 0.5, e});
    }
  }
  const auto table = metric_table(match_detections(dets, gts));
  for (const auto& r : table.rows)
    for (double v : r.ap) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(table.to_csv().substr(table.to_csv().find("mean")), "mean,100.0,100.0,100.0,100.0,100.0\n");
}

TEST(MetricTable, CategoryWithoutGroundTruthIsOmittedWithWarning) {
  auto m = fixture::ten_record_case();
  m.detections.push_back({"l1", "laptop", 0.9, fixture::cube_at()});
  const auto table = metric_table(match_detections(m.detections, m.ground_truth));
  ASSERT_EQ(table.rows.size(), 2u);
  ASSERT_EQ(table.warnings.size(), 1u);
  EXPECT_NE(table.warnings[0].find("laptop"), std::string::npos);
  EXPECT_EQ(format_fixed(100 * table.mean.ap[0], 1), "55.8");
}

TEST(MetricTable, CombinedNeverExceedsComponents) {
  auto rng = make_engine(68, {});
  std::uniform_real_distribution<double> u(0, 1), off(-0.15, 0.15), ang(0, 25);
  for (int t = 0; t < 30; ++t) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
    for (int i = 0; i < 15; ++i) {
      const std::string id = std::to_string(i);
      const char* cat = i % 2 ? "camera" : "laptop";
      gts.push_back({id, cat, fixture::cube_at()});
      if (u(rng) < 0.85) {
        dets.push_back({id, cat, u(rng),
                        fixture::cube_at(Vec3(off(rng), off(rng), 1), 0.3,
                                         Rotation::axis_angle_deg(random_unit_vector(rng), ang(rng)))});
      }
    }
    const auto table = metric_table(match_detections(dets, gts));
    for (const auto& r : table.rows) EXPECT_LE(r.ap[4], std::min(r.ap[2], r.ap[3]) + 1e-15);
    EXPECT_LE(table.mean.ap[4], std::min(table.mean.ap[2], table.mean.ap[3]) + 1e-15);
  }
}

TEST(ApCurves, PerfectIsConstantOne) {
  const auto gt = fixture::cube_at();
  RecordSet rs;
  rs["can"] = {{record("can", 1.0, gt, gt)}, 1};
  for (auto axis : {MetricAxis::Iou, MetricAxis::Rotation, MetricAxis::Translation}) {
    const auto c = ap_curves(rs, axis, {1e-9, 0.25, 0.5, 0.99});
    for (double v : c.mean) EXPECT_EQ(v, 1.0);
  }
}

TEST(ApCurves, MonotoneAndCsvLayout) {
  const auto m = fixture::ten_record_case();
  const auto rs = match_detections(m.detections, m.ground_truth);
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(i * 0.02);
  const auto iou = ap_curves(rs, MetricAxis::Iou, grid);
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_LE(iou.mean[i], iou.mean[i - 1]);
  std::vector<double> deg;
  for (int i = 0; i <= 60; ++i) deg.push_back(i * 2.0);
  const auto rot = ap_curves(rs, MetricAxis::Rotation, deg);
  const auto tr = ap_curves(rs, MetricAxis::Translation, deg);
  for (std::size_t i = 1; i < deg.size(); ++i) {
    EXPECT_GE(rot.mean[i], rot.mean[i - 1]);
    EXPECT_GE(tr.mean[i], tr.mean[i - 1]);
  }
  const std::string csv = iou.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "threshold,camera,mug,mean");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), grid.size() + 1);
  EXPECT_EQ(code_of([&] { ap_curves(rs, MetricAxis::Iou, {0.5, 0.5}); }), Errc::InvalidArgument);
}

TEST(ApCurves, AgreesWithTableAtTableThresholds) {
  const auto m = fixture::ten_record_case();
  const auto rs = match_detections(m.detections, m.ground_truth);
  const auto table = metric_table(rs);
  EXPECT_NEAR(ap_curves(rs, MetricAxis::Iou, {0.5, 0.75}).mean[0], table.mean.ap[0], 1e-15);
  EXPECT_NEAR(ap_curves(rs, MetricAxis::Iou, {0.5, 0.75}).mean[1], table.mean.ap[1], 1e-15);
  EXPECT_NEAR(ap_curves(rs, MetricAxis::Translation, {10.0}).mean[0], table.mean.ap[2], 1e-15);
  EXPECT_NEAR(ap_curves(rs, MetricAxis::Rotation, {10.0}).mean[0], table.mean.ap[3], 1e-15);
}
