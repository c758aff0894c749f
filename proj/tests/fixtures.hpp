#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "catpose/catpose.hpp"

namespace fixture {

using namespace catpose;

/// Cube-shaped ground truth: identity rotation, 1 m in front of the camera,
/// 0.3 m diagonal. Side length is 0.3 / sqrt(3).
inline PoseEstimate cube_at(const Vec3& t = Vec3(0, 0, 1), double scale = 0.3,
                            const Rotation& r = Rotation()) {
  return PoseEstimate{RigidPose{r, t}, scale, Vec3::Constant(1.0 / std::sqrt(3.0))};
}

struct MetricCase {
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truth;
};

/// Ten detections over two categories, worked out by hand:
///
/// camera (5 gt, c1..c5)       conf  IoU     rot   trans
///   FP on image c9            0.95  -       -     -
///   c1 exact                  0.90  1       0     0
///   c2 shifted 5 cm in x      0.80  0.552   0     5
///   c3 rotated 90 deg about z 0.70  1       90    0
///   c4 shifted 12 cm in x     0.60  0.1815  0     12
///   c5 missed
///
/// mug (3 gt, m1..m3; symmetric about y)
///   m1 scaled 1.2x            0.50  0.5787  0     0
///   m2 exact                  0.40  1       0     0
///   second hit on m2          0.35  duplicate -> FP
///   m3 scaled 2x              0.30  0.125   0     0
///   FP on image m9            0.10  -       -     -
inline MetricCase ten_record_case() {
  MetricCase m;
  auto gt = [&](const std::string& img, const std::string& cat) {
    m.ground_truth.push_back({img, cat, cube_at()});
  };
  auto det = [&](const std::string& img, const std::string& cat, double conf, const PoseEstimate& e) {
    m.detections.push_back({img, cat, conf, e});
  };
  for (const char* id : {"c1", "c2", "c3", "c4", "c5"}) gt(id, "camera");
  for (const char* id : {"m1", "m2", "m3"}) gt(id, "mug");

  det("c9", "camera", 0.95, cube_at());
  det("c1", "camera", 0.90, cube_at());
  det("c2", "camera", 0.80, cube_at(Vec3(0.05, 0, 1)));
  det("c3", "camera", 0.70, cube_at(Vec3(0, 0, 1), 0.3, Rotation::about_z(90)));
  det("c4", "camera", 0.60, cube_at(Vec3(0.12, 0, 1)));

  det("m1", "mug", 0.50, cube_at(Vec3(0, 0, 1), 0.36));
  det("m2", "mug", 0.40, cube_at());
  det("m2", "mug", 0.35, cube_at());
  det("m3", "mug", 0.30, cube_at(Vec3(0, 0, 1), 0.6));
  det("m9", "mug", 0.10, cube_at());
  return m;
}

/// Spreadsheet values, columns IoU50, IoU75, 10cm, 10 deg, 10 deg 10cm.
inline constexpr std::array<double, 5> kCameraAp{0.45, 0.2, 0.45, 29.0 / 75.0, 4.0 / 15.0};
inline constexpr std::array<double, 5> kMugAp{2.0 / 3.0, 1.0 / 6.0, 11.0 / 12.0, 11.0 / 12.0, 11.0 / 12.0};
inline const std::array<const char*, 5> kMeanPercent{"55.8", "18.3", "68.3", "65.2", "59.2"};

/// Exact 2D-3D correspondences of a synthetic scene with the model scaled by `s`.
inline Correspondences scene_correspondences(const SyntheticScene& scene, double s) {
  const auto pts = scale_model_points(s, scene.model.points());
  Correspondences c(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) c[i] = {scene.pixels[i], pts[i]};
  return c;
}

/// Independent all-points VOC AP: for each true positive, the best precision
/// attained at that recall or later, summed with weight 1/num_gt.
inline double oracle_ap(std::vector<std::pair<double, bool>> ranked, std::size_t num_gt) {
  std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<double> prec;
  std::vector<bool> hit;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    tp += ranked[i].second;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    hit.push_back(ranked[i].second);
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < prec.size(); ++i) {
    if (!hit[i]) continue;
    double best = 0.0;
    for (std::size_t j = i; j < prec.size(); ++j) best = std::max(best, prec[j]);
    ap += best / static_cast<double>(num_gt);
  }
  return ap;
}

}  // namespace fixture
