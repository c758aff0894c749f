#pragma once

/**
 * @file synth.hpp
 * @brief Synthetic scenes for comparing decoupled pose/size recovery
 * (scale from a predictor, pose from RANSAC-PnP on scaled model points)
 * against a coupled 3D-3D baseline (back-projected pseudo-depth aligned by
 * a similarity transform).
 *
 * All randomness is derived from recorded seeds; a (master seed, category,
 * trial) triple regenerates a trial independently of evaluation order.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "catpose/error.hpp"
#include "catpose/eval.hpp"
#include "catpose/format.hpp"
#include "catpose/geometry.hpp"
#include "catpose/nocs.hpp"
#include "catpose/pnp.hpp"
#include "catpose/random.hpp"
#include "catpose/scale.hpp"

namespace catpose {

inline const std::vector<std::string>& synthetic_categories() {
  static const std::vector<std::string> cats{"bottle", "bowl", "camera", "can", "laptop", "mug"};
  return cats;
}

/// Desk-scale category statistics (meters, bbox diagonal).
inline CategoryStats default_category_stats(const std::string& category) {
  static const std::map<std::string, std::pair<double, double>> table{
      {"bottle", {0.30, 0.05}}, {"bowl", {0.20, 0.03}},   {"camera", {0.17, 0.03}},
      {"can", {0.16, 0.02}},    {"laptop", {0.45, 0.06}}, {"mug", {0.15, 0.02}},
  };
  const auto it = table.find(category);
  if (it == table.end()) throw Error(Errc::UnknownCategory, "unknown category '" + category + "'");
  return {category, it->second.first, it->second.second, 100};
}

struct CanonicalModel {
  std::string category;
  NocsModel model;
  Vec3 canonical_extents;  ///< tight bbox of the normalized points, unit diagonal
};

namespace detail {

/// Area-weighted surface sampler over a list of parametric patches.
class SurfaceSampler {
 public:
  using Patch = std::function<Vec3(RandomEngine&)>;

  void add(double area, Patch patch) {
    areas_.push_back(area);
    patches_.push_back(std::move(patch));
  }

  PointSet3 sample(std::size_t n, RandomEngine& rng) const {
    std::discrete_distribution<std::size_t> pick(areas_.begin(), areas_.end());
    PointSet3 pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pts.push_back(patches_[pick(rng)](rng));
    return pts;
  }

 private:
  std::vector<double> areas_;
  std::vector<Patch> patches_;
};

inline double uniform(RandomEngine& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Open or closed cylinder about the y axis, base at y0.
inline void add_cylinder(SurfaceSampler& s, double radius, double y0, double height, bool top, bool bottom) {
  s.add(2.0 * kPi * radius * height, [=](RandomEngine& rng) {
    const double th = uniform(rng, 0.0, 2.0 * kPi);
    return Vec3(radius * std::cos(th), y0 + uniform(rng, 0.0, height), radius * std::sin(th));
  });
  auto disk = [=](double y) {
    return [=](RandomEngine& rng) {
      const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
      const double th = uniform(rng, 0.0, 2.0 * kPi);
      return Vec3(r * std::cos(th), y, r * std::sin(th));
    };
  };
  if (bottom) s.add(kPi * radius * radius, disk(y0));
  if (top) s.add(kPi * radius * radius, disk(y0 + height));
}

/// Surface of a box with half-sizes h, rotated by `rot` and centered at `c`.
inline void add_box(SurfaceSampler& s, const Vec3& h, const Mat3& rot, const Vec3& c) {
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, d = (a + 2) % 3;
    for (double sign : {-1.0, 1.0}) {
      s.add(4.0 * h(b) * h(d), [=](RandomEngine& rng) {
        Vec3 p;
        p(a) = sign * h(a);
        p(b) = uniform(rng, -h(b), h(b));
        p(d) = uniform(rng, -h(d), h(d));
        return Vec3(rot * p + c);
      });
    }
  }
}

}  // namespace detail

/// Procedural stand-in shapes, y axis up, normalized to unit bbox diagonal.
/// bottle/can: closed cylinders; bowl: hemispherical shell; camera: box;
/// laptop: base slab with a tilted screen slab; mug: cylinder plus handle.
inline CanonicalModel make_canonical_model(const std::string& category, std::size_t n,
                                           std::uint64_t seed = 0) {
  if (n < 32) throw Error(Errc::InvalidArgument, "canonical model needs at least 32 points");
  detail::SurfaceSampler s;
  if (category == "bottle") {
    detail::add_cylinder(s, 0.04, 0.0, 0.25, true, true);
  } else if (category == "can") {
    detail::add_cylinder(s, 0.033, 0.0, 0.12, true, true);
  } else if (category == "bowl") {
    const double r = 0.08;
    s.add(2.0 * kPi * r * r, [r](RandomEngine& rng) {
      Vec3 u = random_unit_vector(rng);
      u.y() = -std::abs(u.y());
      return Vec3(r * u);
    });
  } else if (category == "camera") {
    detail::add_box(s, Vec3(0.06, 0.04, 0.03), Mat3::Identity(), Vec3::Zero());
  } else if (category == "laptop") {
    detail::add_box(s, Vec3(0.16, 0.01, 0.11), Mat3::Identity(), Vec3::Zero());
    const Mat3 tilt = Rotation::about_x(-20.0).matrix();
    const Vec3 hinge(0.0, 0.01, -0.11);
    detail::add_box(s, Vec3(0.16, 0.11, 0.005), tilt, hinge + tilt * Vec3(0.0, 0.11, 0.0));
  } else if (category == "mug") {
    const double r = 0.045, h = 0.10;
    detail::add_cylinder(s, r, 0.0, h, false, true);
    const double major = 0.03, minor = 0.008;
    s.add(kPi * major * 2.0 * kPi * minor, [=](RandomEngine& rng) {
      const double phi = detail::uniform(rng, -0.5 * kPi, 0.5 * kPi);
      const double psi = detail::uniform(rng, 0.0, 2.0 * kPi);
      const double rr = major + minor * std::cos(psi);
      return Vec3(r + rr * std::cos(phi) - 0.01, 0.5 * h + rr * std::sin(phi), minor * std::sin(psi));
    });
  } else {
    throw Error(Errc::UnknownCategory, "unknown category '" + category + "'");
  }
  auto rng = make_engine(seed, {fnv1a(category)});
  const auto norm = normalize_model(s.sample(n, rng));
  const Vec3 extents = tight_bbox(norm.points).extents();
  return {category, NocsModel(norm.points), extents};
}

struct SceneConfig {
  CameraIntrinsics intrinsics{};
  int width = 640;
  int height = 480;
  std::size_t points = 128;
  double min_depth = 0.6;
  double max_depth = 1.4;
  double lateral_fraction = 0.25;  ///< |x|, |y| <= fraction * depth
  double margin_px = 4.0;
  int max_attempts = 200;
  std::uint64_t model_seed = 0;
};

struct SyntheticScene {
  std::string category;
  RigidPose gt_pose;
  double gt_scale = 1.0;
  NocsModel model;
  Vec3 canonical_extents;
  CameraIntrinsics intrinsics;
  int width = 640;
  int height = 480;
  std::vector<Point2> pixels;  ///< noiseless projections of gt_scale * model
  std::vector<double> depths;  ///< camera-frame z per point
  std::uint64_t seed = 0;
};

/// Draws a scale from Normal(s_r, sigma_s) truncated below at
/// max(s_r - 3 sigma_s, 0), a uniform rotation and a translation that
/// keeps every projected point inside the frame.
inline SyntheticScene sample_scene(const std::string& category, std::uint64_t seed,
                                   const SceneConfig& cfg, const CategoryStats& stats) {
  stats.validate();
  cfg.intrinsics.validate();
  const auto canon = make_canonical_model(category, cfg.points, cfg.model_seed);
  auto rng = make_engine(seed, {0x5ce7e});

  SyntheticScene scene;
  scene.category = category;
  scene.model = canon.model;
  scene.canonical_extents = canon.canonical_extents;
  scene.intrinsics = cfg.intrinsics;
  scene.width = cfg.width;
  scene.height = cfg.height;
  scene.seed = seed;

  std::normal_distribution<double> scale_dist(stats.mean_scale, stats.std_dev);
  const double floor = std::max(stats.mean_scale - 3.0 * stats.std_dev, 0.0);
  do {
    scene.gt_scale = stats.std_dev > 0.0 ? scale_dist(rng) : stats.mean_scale;
  } while (!(scene.gt_scale > 0.0 && scene.gt_scale >= floor));

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const Rotation rot = random_rotation(rng);
    const double z = detail::uniform(rng, cfg.min_depth, cfg.max_depth);
    const double lat = cfg.lateral_fraction * z;
    const Vec3 t(detail::uniform(rng, -lat, lat), detail::uniform(rng, -lat, lat), z);
    const RigidPose pose{rot, t};

    std::vector<Point2> pixels;
    std::vector<double> depths;
    bool ok = true;
    for (const auto& x : scene.model.points()) {
      const Vec3 pc = pose.apply(scene.gt_scale * x);
      if (pc.z() <= 0.05) {
        ok = false;
        break;
      }
      const Point2 uv = project(pc, cfg.intrinsics);
      if (uv.x() < cfg.margin_px || uv.x() > cfg.width - cfg.margin_px || uv.y() < cfg.margin_px ||
          uv.y() > cfg.height - cfg.margin_px) {
        ok = false;
        break;
      }
      pixels.push_back(uv);
      depths.push_back(pc.z());
    }
    if (!ok) continue;
    scene.gt_pose = pose;
    scene.pixels = std::move(pixels);
    scene.depths = std::move(depths);
    return scene;
  }
  throw Error(Errc::PlacementFailed, "could not place object inside the frame");
}

inline SyntheticScene sample_scene(const std::string& category, std::uint64_t seed,
                                   const SceneConfig& cfg = {}) {
  return sample_scene(category, seed, cfg, default_category_stats(category));
}

enum class ScaleErrorMode { Systematic, Stochastic, MeanScale };

inline const char* to_string(ScaleErrorMode m) {
  switch (m) {
    case ScaleErrorMode::Systematic: return "systematic";
    case ScaleErrorMode::Stochastic: return "stochastic";
    case ScaleErrorMode::MeanScale: return "mean";
  }
  return "?";
}

inline ScaleErrorMode parse_scale_mode(const std::string& s) {
  if (s == "systematic") return ScaleErrorMode::Systematic;
  if (s == "stochastic") return ScaleErrorMode::Stochastic;
  if (s == "mean") return ScaleErrorMode::MeanScale;
  throw Error(Errc::InvalidArgument, "unknown scale mode '" + s + "'");
}

struct NoiseSpec {
  double pixel_noise_sigma = 0.0;  ///< px
  double outlier_fraction = 0.0;   ///< [0, 1)
  double scale_rel_error = 0.0;    ///< systematic offset, or sigma when stochastic
  ScaleErrorMode scale_mode = ScaleErrorMode::Systematic;
  double depth_rel_noise = 0.0;    ///< coupled baseline only

  void validate() const {
    if (!(pixel_noise_sigma >= 0.0) || !(depth_rel_noise >= 0.0)) {
      throw Error(Errc::InvalidArgument, "noise levels must be >= 0");
    }
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
      throw Error(Errc::InvalidArgument, "outlier fraction must lie in [0, 1)");
    }
    if (scale_mode == ScaleErrorMode::Systematic && !(scale_rel_error > -1.0)) {
      throw Error(Errc::InvalidArgument, "systematic scale error must be > -1");
    }
    if (scale_mode == ScaleErrorMode::Stochastic && !(scale_rel_error >= 0.0)) {
      throw Error(Errc::InvalidArgument, "stochastic scale error sigma must be >= 0");
    }
  }
};

struct CorruptedObservation {
  std::vector<Point2> pixels;
  std::vector<bool> outlier;
  std::vector<double> pseudo_depths;

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::count(outlier.begin(), outlier.end(), true));
  }
};

/// Gaussian pixel noise on inliers, floor(fraction * n) uniform in-frame
/// outliers, and multiplicative pseudo-depth noise. Each channel has its own
/// stream derived from `seed`, so changing one noise level leaves the draws
/// of the others untouched.
inline CorruptedObservation corrupt(const SyntheticScene& scene, const NoiseSpec& spec,
                                    std::uint64_t seed) {
  spec.validate();
  const std::size_t n = scene.pixels.size();
  CorruptedObservation out{scene.pixels, std::vector<bool>(n, false), scene.depths};

  const auto n_out = static_cast<std::size_t>(std::floor(spec.outlier_fraction * static_cast<double>(n) + 1e-9));
  if (n_out > 0) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto pick = make_engine(seed, {2});
    std::shuffle(idx.begin(), idx.end(), pick);
    auto place = make_engine(seed, {3});
    std::uniform_real_distribution<double> ux(0.0, scene.width), uy(0.0, scene.height);
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_out));
    for (std::size_t j = 0; j < n_out; ++j) {
      out.outlier[idx[j]] = true;
      out.pixels[idx[j]] = Point2(ux(place), uy(place));
    }
  }
  if (spec.pixel_noise_sigma > 0.0) {
    auto rng = make_engine(seed, {1});
    std::normal_distribution<double> g(0.0, spec.pixel_noise_sigma);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 e(g(rng), g(rng));
      if (!out.outlier[i]) out.pixels[i] += e;
    }
  }
  if (spec.depth_rel_noise > 0.0) {
    auto rng = make_engine(seed, {4});
    std::normal_distribution<double> g(0.0, spec.depth_rel_noise);
    for (std::size_t i = 0; i < n; ++i) {
      out.pseudo_depths[i] = scene.depths[i] * std::max(1.0 + g(rng), 0.05);
    }
  }
  return out;
}

enum class Pipeline { Decoupled, Coupled };

inline const char* to_string(Pipeline p) { return p == Pipeline::Decoupled ? "decoupled" : "coupled"; }

struct ExperimentResult {
  Pipeline pipeline = Pipeline::Decoupled;
  bool ok = false;
  std::string failure;  ///< error code name when !ok
  double rot_err_deg = 0.0;   ///< raw geodesic (full correspondences fix every axis)
  double trans_err_cm = 0.0;
  double iou = 0.0;
  double est_scale = 0.0;
  DetectionRecord record;  ///< prediction absent-equivalent when !ok
};

namespace detail {
inline ExperimentResult finish(Pipeline p, const SyntheticScene& scene, const RigidPose& pose, double scale) {
  ExperimentResult r;
  r.pipeline = p;
  r.ok = true;
  r.est_scale = scale;
  r.rot_err_deg = rotation_error_deg(pose.rotation, scene.gt_pose.rotation);
  r.trans_err_cm = translation_error_cm(pose.translation, scene.gt_pose.translation);
  const PoseEstimate pred{pose, scale, scene.canonical_extents};
  const PoseEstimate gt{scene.gt_pose, scene.gt_scale, scene.canonical_extents};
  r.iou = iou3d(pred.box(), gt.box());
  r.record = {scene.category, 1.0, pred, gt};
  return r;
}
}  // namespace detail

/// Scale from the predictor, pose from RANSAC-PnP on the scaled model.
inline ExperimentResult run_decoupled(const SyntheticScene& scene, const CorruptedObservation& obs,
                                      const ScalePredictor& predictor, const CategoryStats& stats,
                                      const RansacConfig& cfg = {}) {
  const ScaleObservation sobs{scene.category, scene.seed, scene.gt_scale, {}};
  const ScalePrediction sp = predictor.predict(sobs, stats);
  const auto scaled = scale_model_points(sp.scale, scene.model.points());
  Correspondences corr(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) corr[i] = {obs.pixels[i], scaled[i]};
  const PnPResult res = ransac_pnp(corr, scene.intrinsics, cfg);
  return detail::finish(Pipeline::Decoupled, scene, res.pose, sp.scale);
}

/// Back-projects every pixel at its pseudo-depth and fits a similarity from
/// the normalized model; the fitted scale is the metric size estimate.
inline ExperimentResult run_coupled(const SyntheticScene& scene, const CorruptedObservation& obs) {
  PointSet3 cloud(obs.pixels.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cloud[i] = backproject(obs.pixels[i], obs.pseudo_depths[i], scene.intrinsics);
  }
  const auto sim = umeyama_align(scene.model.points(), cloud, true);
  return detail::finish(Pipeline::Coupled, scene, sim.rigid(), sim.scale);
}

inline std::shared_ptr<const ScalePredictor> predictor_for(const NoiseSpec& spec, std::uint64_t seed) {
  switch (spec.scale_mode) {
    case ScaleErrorMode::Systematic: return systematic_scale_predictor(spec.scale_rel_error);
    case ScaleErrorMode::Stochastic: return noisy_oracle_predictor(seed, spec.scale_rel_error);
    case ScaleErrorMode::MeanScale: return mean_scale_predictor();
  }
  return mean_scale_predictor();
}

// ---------------------------------------------------------------------------
// Factorial grid
// ---------------------------------------------------------------------------

struct GridConfig {
  std::vector<std::string> categories = synthetic_categories();
  std::vector<NoiseSpec> noise_points{NoiseSpec{}};
  std::size_t trials = 10;
  std::uint64_t master_seed = 0;
  SceneConfig scene{};
  RansacConfig ransac{};
  std::map<std::string, CategoryStats> stats;  ///< falls back to default_category_stats

  CategoryStats stats_for(const std::string& category) const {
    const auto it = stats.find(category);
    return it != stats.end() ? it->second : default_category_stats(category);
  }
};

struct TrialRow {
  Pipeline pipeline = Pipeline::Decoupled;
  std::size_t noise_index = 0;
  std::string category;
  std::size_t trial = 0;
  std::uint64_t scene_seed = 0;
  double gt_scale = 0.0;
  ExperimentResult result;
};

struct CellSummary {
  Pipeline pipeline = Pipeline::Decoupled;
  std::size_t noise_index = 0;
  std::string category;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double median_rot_deg = 0.0, mean_rot_deg = 0.0;
  double median_trans_cm = 0.0, mean_trans_cm = 0.0;
  double median_iou = 0.0, mean_iou = 0.0;
  std::array<double, 5> map{};  ///< metric_table columns, fractions
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct GridResult {
  GridConfig config;
  std::vector<TrialRow> rows;  ///< ordered by (pipeline, noise, category, trial)
  std::vector<CellSummary> summaries;

  /// Detection records of one (pipeline, noise point) slice, ready for
  /// metric_table. Failed trials contribute ground truth only.
  RecordSet records(Pipeline p, std::size_t noise_index,
                    const std::optional<std::string>& category = std::nullopt) const {
    RecordSet out;
    for (const auto& r : rows) {
      if (r.pipeline != p || r.noise_index != noise_index) continue;
      if (category && r.category != *category) continue;
      auto& cat = out[r.category];
      ++cat.num_ground_truth;
      if (r.result.ok) cat.records.push_back(r.result.record);
    }
    return out;
  }

  std::string trials_csv() const {
    std::ostringstream os;
    os << "pipeline,noise_index,pixel_noise,outlier_fraction,scale_rel_error,scale_mode,depth_rel_noise,"
          "category,trial,scene_seed,status,rot_err_deg,trans_err_cm,iou,est_scale,gt_scale\n";
    for (const auto& r : rows) {
      const auto& ns = config.noise_points[r.noise_index];
      os << to_string(r.pipeline) << ',' << r.noise_index << ',' << format_g17(ns.pixel_noise_sigma) << ','
         << format_g17(ns.outlier_fraction) << ',' << format_g17(ns.scale_rel_error) << ','
         << to_string(ns.scale_mode) << ',' << format_g17(ns.depth_rel_noise) << ',' << r.category << ','
         << r.trial << ',' << r.scene_seed << ',';
      if (r.result.ok) {
        os << "ok," << format_g17(r.result.rot_err_deg) << ',' << format_g17(r.result.trans_err_cm) << ','
           << format_g17(r.result.iou) << ',' << format_g17(r.result.est_scale);
      } else {
        os << r.result.failure << ",,,,";
      }
      os << ',' << format_g17(r.gt_scale) << '\n';
    }
    return os.str();
  }

  std::string summary_csv() const {
    std::ostringstream os;
    os << "pipeline,noise_index,pixel_noise,outlier_fraction,scale_rel_error,scale_mode,depth_rel_noise,"
          "category,trials,failures,median_rot_deg,mean_rot_deg,median_trans_cm,mean_trans_cm,median_iou,mean_iou";
    for (const char* c : kMetricColumns) os << ',' << c;
    os << '\n';
    for (const auto& s : summaries) {
      const auto& ns = config.noise_points[s.noise_index];
      os << to_string(s.pipeline) << ',' << s.noise_index << ',' << format_g17(ns.pixel_noise_sigma) << ','
         << format_g17(ns.outlier_fraction) << ',' << format_g17(ns.scale_rel_error) << ','
         << to_string(ns.scale_mode) << ',' << format_g17(ns.depth_rel_noise) << ',' << s.category << ','
         << s.trials << ',' << s.failures << ',' << format_g17(s.median_rot_deg) << ','
         << format_g17(s.mean_rot_deg) << ',' << format_g17(s.median_trans_cm) << ','
         << format_g17(s.mean_trans_cm) << ',' << format_g17(s.median_iou) << ',' << format_g17(s.mean_iou);
      for (double v : s.map) os << ',' << format_fixed(100.0 * v, 1);
      os << '\n';
    }
    return os.str();
  }
};

/// Runs both pipelines on every (noise point, category, trial). Scenes and
/// corruption draws depend only on (master seed, category, trial), so every
/// noise point sees the same scenes and the same random numbers.
inline GridResult run_grid(const GridConfig& cfg) {
  if (cfg.trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  if (cfg.categories.empty()) throw Error(Errc::InvalidArgument, "no categories");
  if (cfg.noise_points.empty()) throw Error(Errc::InvalidArgument, "no noise points");
  for (const auto& ns : cfg.noise_points) ns.validate();

  GridResult grid;
  grid.config = cfg;
  std::vector<TrialRow> decoupled, coupled;
  for (std::size_t ci = 0; ci < cfg.categories.size(); ++ci) {
    const std::string& category = cfg.categories[ci];
    const CategoryStats stats = cfg.stats_for(category);
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const std::uint64_t scene_seed = derive_seed(cfg.master_seed, {ci, t});
      const SyntheticScene scene = sample_scene(category, scene_seed, cfg.scene, stats);
      const std::uint64_t noise_seed = derive_seed(cfg.master_seed, {ci, t, 0xc0});
      for (std::size_t ni = 0; ni < cfg.noise_points.size(); ++ni) {
        const NoiseSpec& spec = cfg.noise_points[ni];
        const CorruptedObservation obs = corrupt(scene, spec, noise_seed);
        for (Pipeline p : {Pipeline::Decoupled, Pipeline::Coupled}) {
          TrialRow row{p, ni, category, t, scene_seed, scene.gt_scale, {}};
          try {
            if (p == Pipeline::Decoupled) {
              const auto predictor = predictor_for(spec, derive_seed(cfg.master_seed, {0x5ca1e}));
              row.result = run_decoupled(scene, obs, *predictor, stats, cfg.ransac);
            } else {
              row.result = run_coupled(scene, obs);
            }
          } catch (const Error& e) {
            row.result.pipeline = p;
            row.result.ok = false;
            row.result.failure = to_string(e.code());
          }
          (p == Pipeline::Decoupled ? decoupled : coupled).push_back(std::move(row));
        }
      }
    }
  }
  auto by_key = [&](const TrialRow& a, const TrialRow& b) {
    if (a.noise_index != b.noise_index) return a.noise_index < b.noise_index;
    if (a.category != b.category) return a.category < b.category;
    return a.trial < b.trial;
  };
  std::stable_sort(decoupled.begin(), decoupled.end(), by_key);
  std::stable_sort(coupled.begin(), coupled.end(), by_key);
  grid.rows = std::move(decoupled);
  grid.rows.insert(grid.rows.end(), coupled.begin(), coupled.end());

  std::vector<std::string> cats = cfg.categories;
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  for (Pipeline p : {Pipeline::Decoupled, Pipeline::Coupled}) {
    for (std::size_t ni = 0; ni < cfg.noise_points.size(); ++ni) {
      for (const auto& category : cats) {
        CellSummary s{p, ni, category};
        std::vector<double> rot, trans, iou;
        for (const auto& r : grid.rows) {
          if (r.pipeline != p || r.noise_index != ni || r.category != category) continue;
          ++s.trials;
          if (!r.result.ok) {
            ++s.failures;
            continue;
          }
          rot.push_back(r.result.rot_err_deg);
          trans.push_back(r.result.trans_err_cm);
          iou.push_back(r.result.iou);
        }
        s.median_rot_deg = median(rot);
        s.mean_rot_deg = mean(rot);
        s.median_trans_cm = median(trans);
        s.mean_trans_cm = mean(trans);
        s.median_iou = median(iou);
        s.mean_iou = mean(iou);
        const auto table = metric_table(grid.records(p, ni, category));
        s.map = table.mean.ap;
        grid.summaries.push_back(std::move(s));
      }
    }
  }
  return grid;
}

}  // namespace catpose
