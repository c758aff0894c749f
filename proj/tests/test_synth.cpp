#include <gtest/gtest.h>

#include <cmath>

#include "catpose/synth.hpp"
#include "fixtures.hpp"

using namespace catpose;

namespace {

double nearest_distance(const Vec3& p, const PointSet3& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : cloud) best = std::min(best, (p - q).squaredNorm());
  return std::sqrt(best);
}

}  // namespace

TEST(CanonicalModel, SatisfiesPriorInvariants) {
  for (const auto& cat : synthetic_categories()) {
    const auto m = make_canonical_model(cat, 256);
    EXPECT_EQ(m.model.size(), 256u);
    EXPECT_NO_THROW(ShapePrior(cat, m.model.points())) << cat;
    EXPECT_NEAR(m.canonical_extents.norm(), 1.0, 1e-12) << cat;
    EXPECT_LT((m.canonical_extents - tight_bbox(m.model.points()).extents()).norm(), 1e-12);
  }
  EXPECT_THROW(make_canonical_model("spoon", 100), Error);
  EXPECT_THROW(make_canonical_model("mug", 4), Error);
}

TEST(CanonicalModel, Deterministic) {
  for (const auto& cat : synthetic_categories()) {
    const auto a = make_canonical_model(cat, 128, 3), b = make_canonical_model(cat, 128, 3);
    EXPECT_EQ(a.model.points(), b.model.points());
    const auto c = make_canonical_model(cat, 128, 4);
    EXPECT_NE(a.model.points(), c.model.points());
  }
}

TEST(CanonicalModel, CylindersAreSymmetricAboutY) {
  for (const char* cat : {"bottle", "bowl", "can"}) {
    const auto m = make_canonical_model(cat, 1500);
    const auto& pts = m.model.points();
    // mean nearest-neighbour spacing within the cloud itself
    double spacing = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      PointSet3 rest = pts;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
      spacing += nearest_distance(pts[i], rest);
      if (i == 299) break;
    }
    spacing /= 300.0;
    const Rotation spin = Rotation::about_y(30);
    double moved = 0.0;
    for (std::size_t i = 0; i < 300; ++i) moved += nearest_distance(spin * pts[i], pts);
    moved /= 300.0;
    EXPECT_LT(moved, 2.0 * spacing) << cat;
  }
}

TEST(SampleScene, ReproducibleAndInFrame) {
  SceneConfig cfg;
  for (const auto& cat : synthetic_categories()) {
    const auto a = sample_scene(cat, 17, cfg), b = sample_scene(cat, 17, cfg);
    EXPECT_EQ(a.gt_pose.rotation.matrix(), b.gt_pose.rotation.matrix());
    EXPECT_EQ(a.gt_pose.translation, b.gt_pose.translation);
    EXPECT_EQ(a.gt_scale, b.gt_scale);
    EXPECT_EQ(a.pixels, b.pixels);
    for (const auto& uv : a.pixels) {
      EXPECT_GE(uv.x(), 0.0);
      EXPECT_LE(uv.x(), cfg.width);
      EXPECT_GE(uv.y(), 0.0);
      EXPECT_LE(uv.y(), cfg.height);
    }
    for (double z : a.depths) EXPECT_GT(z, 0.0);
    EXPECT_GT(a.gt_scale, 0.0);
  }
}

TEST(SampleScene, PlacementFailureIsReported) {
  SceneConfig cfg;
  cfg.min_depth = cfg.max_depth = 0.01;  // every placement clips the near plane
  cfg.max_attempts = 5;
  try {
    sample_scene("mug", 1, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PlacementFailed);
  }
}

TEST(Corrupt, ZeroSpecIsIdentity) {
  const auto s = sample_scene("can", 3);
  const auto obs = corrupt(s, NoiseSpec{}, 9);
  EXPECT_EQ(obs.pixels, s.pixels);
  EXPECT_EQ(obs.pseudo_depths, s.depths);
  EXPECT_EQ(obs.outlier_count(), 0u);
}

TEST(Corrupt, OutlierCountIsExact) {
  SceneConfig cfg;
  cfg.points = 100;
  const auto s = sample_scene("mug", 4, cfg);
  NoiseSpec spec;
  spec.outlier_fraction = 0.3;
  const auto obs = corrupt(s, spec, 5);
  EXPECT_EQ(obs.outlier_count(), 30u);
  for (std::size_t i = 0; i < obs.pixels.size(); ++i) {
    if (!obs.outlier[i]) {
      EXPECT_EQ(obs.pixels[i], s.pixels[i]);
    }
  }
}

TEST(Corrupt, PixelNoiseSigma) {
  SceneConfig cfg;
  cfg.points = 1000;
  NoiseSpec spec;
  spec.pixel_noise_sigma = 1.5;
  double sq = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = sample_scene("laptop", seed, cfg);
    const auto obs = corrupt(s, spec, seed);
    for (std::size_t i = 0; i < s.pixels.size(); ++i) {
      const Vec2 d = obs.pixels[i] - s.pixels[i];
      sq += d.squaredNorm();
      n += 2;
    }
  }
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n)), 1.5, 0.05 * 1.5);
}

TEST(Corrupt, ChannelsUseIndependentStreams) {
  const auto s = sample_scene("bottle", 8);
  NoiseSpec a, b;
  a.pixel_noise_sigma = b.pixel_noise_sigma = 1.0;
  b.depth_rel_noise = 0.1;
  EXPECT_EQ(corrupt(s, a, 1).pixels, corrupt(s, b, 1).pixels);
}

TEST(Corrupt, RejectsBadSpec) {
  const auto s = sample_scene("bottle", 8);
  NoiseSpec bad;
  bad.outlier_fraction = 1.0;
  EXPECT_THROW(corrupt(s, bad, 1), Error);
  bad = {};
  bad.pixel_noise_sigma = -1;
  EXPECT_THROW(corrupt(s, bad, 1), Error);
}

TEST(Decoupled, ExactPredictorNoNoise) {
  for (const auto& cat : synthetic_categories()) {
    const auto s = sample_scene(cat, 21);
    const auto stats = default_category_stats(cat);
    const auto r = run_decoupled(s, corrupt(s, {}, 0), *noisy_oracle_predictor(0, 0.0), stats);
    ASSERT_TRUE(r.ok);
    EXPECT_LT(r.rot_err_deg, 0.01);
    EXPECT_LT(r.trans_err_cm, 1e-4);
    EXPECT_NEAR(r.iou, 1.0, 1e-9);
  }
}

TEST(Decoupled, MeanScaleRotationUnaffected) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto& cat = synthetic_categories()[seed % 6];
    const auto s = sample_scene(cat, seed);
    const auto stats = default_category_stats(cat);
    const auto r = run_decoupled(s, corrupt(s, {}, 0), *mean_scale_predictor(), stats);
    EXPECT_LT(r.rot_err_deg, 0.01);
    const double ratio = stats.mean_scale / s.gt_scale;
    const double rel = r.trans_err_cm / 100.0 / s.gt_pose.translation.norm();
    EXPECT_NEAR(rel, std::abs(ratio - 1.0), 0.1 * std::abs(ratio - 1.0) + 1e-9);
  }
}

TEST(Coupled, ExactWithoutDepthNoise) {
  for (const auto& cat : synthetic_categories()) {
    const auto s = sample_scene(cat, 22);
    const auto r = run_coupled(s, corrupt(s, {}, 0));
    ASSERT_TRUE(r.ok);
    EXPECT_LT(deg2rad(r.rot_err_deg), 1e-6);
    EXPECT_LT(r.trans_err_cm / 100.0, 1e-6);
    EXPECT_NEAR(r.est_scale, s.gt_scale, 1e-6);
  }
}

TEST(Coupled, DepthNoiseLeaksIntoRotation) {
  GridConfig g;
  g.categories = {"mug", "laptop"};
  g.trials = 25;
  g.noise_points.clear();
  for (double dn : {0.0, 0.05}) {
    NoiseSpec n;
    n.depth_rel_noise = dn;
    g.noise_points.push_back(n);
  }
  const auto res = run_grid(g);
  std::vector<double> coupled5, dec0, dec5;
  for (const auto& r : res.rows) {
    if (r.pipeline == Pipeline::Coupled && r.noise_index == 1) coupled5.push_back(r.result.rot_err_deg);
    if (r.pipeline == Pipeline::Decoupled) (r.noise_index ? dec5 : dec0).push_back(r.result.rot_err_deg);
  }
  EXPECT_GT(median(coupled5), 0.1);
  EXPECT_EQ(dec0, dec5);
}

TEST(Grid, DeterministicCsvAndLayout) {
  GridConfig g;
  g.categories = {"bowl", "camera"};
  g.trials = 3;
  NoiseSpec n;
  n.pixel_noise_sigma = 0.5;
  n.outlier_fraction = 0.2;
  g.noise_points = {NoiseSpec{}, n};
  const auto a = run_grid(g), b = run_grid(g);
  EXPECT_EQ(a.trials_csv(), b.trials_csv());
  EXPECT_EQ(a.summary_csv(), b.summary_csv());
  EXPECT_EQ(a.rows.size(), 2u * 2u * 2u * 3u);
  const std::string csv = a.trials_csv();
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), a.rows.size() + 1);
  g.master_seed = 1;
  EXPECT_NE(run_grid(g).trials_csv(), a.trials_csv());
}

TEST(Grid, OneCellNoNoiseBothNearExact) {
  GridConfig g;
  g.categories = {"can"};
  g.trials = 1;
  const auto res = run_grid(g);
  ASSERT_EQ(res.rows.size(), 2u);
  for (const auto& r : res.rows) {
    ASSERT_TRUE(r.result.ok);
    EXPECT_LT(r.result.rot_err_deg, 1e-6);
    EXPECT_LT(r.result.trans_err_cm, 1e-4);
  }
}

TEST(Grid, RecordsFeedMetricTable) {
  GridConfig g;
  g.categories = {"mug", "can"};
  g.trials = 4;
  const auto res = run_grid(g);
  const auto table = metric_table(res.records(Pipeline::Decoupled, 0));
  ASSERT_EQ(table.rows.size(), 2u);
  for (double v : table.mean.ap) EXPECT_NEAR(v, 1.0, 1e-12);
  const auto only_mug = res.records(Pipeline::Coupled, 0, std::string("mug"));
  EXPECT_EQ(only_mug.size(), 1u);
  EXPECT_EQ(only_mug.at("mug").num_ground_truth, 4u);
}

TEST(ScaleMode, ParseRoundTrip) {
  for (auto m : {ScaleErrorMode::Systematic, ScaleErrorMode::Stochastic, ScaleErrorMode::MeanScale}) {
    EXPECT_EQ(parse_scale_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_scale_mode("bogus"), Error);
}
