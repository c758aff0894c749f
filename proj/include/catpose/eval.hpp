#pragma once

/**
 * @file eval.hpp
 * @brief Category-level pose benchmark metrics: exact oriented-box 3D IoU,
 * rotation/translation errors, greedy detection matching, per-category
 * average precision, mAP tables and AP-versus-threshold curves.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "catpose/error.hpp"
#include "catpose/format.hpp"
#include "catpose/geometry.hpp"
#include "catpose/random.hpp"

namespace catpose {

struct OrientedBox3 {
  RigidPose pose;
  Vec3 extents = Vec3::Ones();  ///< full side lengths, meters

  double volume() const { return extents.prod(); }

  bool contains(const Vec3& p) const {
    const Vec3 local = pose.rotation.inverse() * (p - pose.translation);
    return (local.cwiseAbs().array() <= 0.5 * extents.array()).all();
  }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) {
      const Vec3 sign((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
      out[static_cast<std::size_t>(i)] = pose.apply(0.5 * sign.cwiseProduct(extents));
    }
    return out;
  }
};

inline OrientedBox3 box_from_estimate(const RigidPose& pose, double scale,
                                      const Vec3& canonical_extents) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(Errc::NonPositiveScale, "box scale must be positive");
  }
  if (!((canonical_extents.array() > 0.0).all())) {
    throw Error(Errc::InvalidArgument, "canonical extents must be positive");
  }
  return {pose, scale * canonical_extents};
}

// ---------------------------------------------------------------------------
// Exact intersection volume by half-space clipping
// ---------------------------------------------------------------------------

namespace detail {

struct PolyFace {
  Vec3 normal;  ///< outward, unit
  double offset = 0.0;  ///< normal . x = offset on the face
  std::vector<Vec3> verts;  ///< cyclic order
};

using Polytope = std::vector<PolyFace>;

inline Polytope box_polytope(const OrientedBox3& box) {
  Polytope poly;
  const Mat3& r = box.pose.rotation.matrix();
  const Vec3 h = 0.5 * box.extents;
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    for (double s : {1.0, -1.0}) {
      PolyFace f;
      f.normal = s * r.col(a);
      f.offset = f.normal.dot(box.pose.translation) + h(a);
      const Vec3 center = box.pose.translation + s * h(a) * r.col(a);
      const Vec3 eb = h(b) * r.col(b), ec = h(c) * r.col(c);
      f.verts = {center + eb + ec, center - eb + ec, center - eb - ec, center + eb - ec};
      poly.push_back(std::move(f));
    }
  }
  return poly;
}

/// Half-spaces n . x <= d bounding the box.
inline std::vector<std::pair<Vec3, double>> box_halfspaces(const OrientedBox3& box) {
  std::vector<std::pair<Vec3, double>> out;
  for (const auto& f : box_polytope(box)) out.emplace_back(f.normal, f.offset);
  return out;
}

/// Intersect with the closed half-space n . x <= d (boundary counts as
/// inside). Returns an empty polytope when the remainder has no volume.
inline Polytope clip(const Polytope& poly, const Vec3& n, double d, double eps) {
  bool any_in = false, any_out = false;
  for (const auto& f : poly) {
    for (const auto& v : f.verts) {
      const double s = n.dot(v) - d;
      if (s < -eps) any_in = true;
      if (s > eps) any_out = true;
    }
  }
  if (!any_out) return poly;
  if (!any_in) return {};

  Polytope out;
  std::vector<Vec3> cap;
  for (const auto& f : poly) {
    PolyFace g{f.normal, f.offset, {}};
    const std::size_t m = f.verts.size();
    for (std::size_t i = 0; i < m; ++i) {
      const Vec3& p = f.verts[i];
      const Vec3& q = f.verts[(i + 1) % m];
      const double dp = n.dot(p) - d;
      const double dq = n.dot(q) - d;
      if (dp <= eps) {
        g.verts.push_back(p);
        if (dp >= -eps) cap.push_back(p);
      }
      if ((dp < -eps && dq > eps) || (dp > eps && dq < -eps)) {
        const Vec3 x = p + (q - p) * (dp / (dp - dq));
        g.verts.push_back(x);
        cap.push_back(x);
      }
    }
    if (g.verts.size() >= 3) out.push_back(std::move(g));
  }

  std::vector<Vec3> uniq;
  for (const auto& p : cap) {
    const bool dup = std::any_of(uniq.begin(), uniq.end(),
                                 [&](const Vec3& u) { return (u - p).norm() <= 10.0 * eps; });
    if (!dup) uniq.push_back(p);
  }
  if (uniq.size() >= 3) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : uniq) c += p;
    c /= static_cast<double>(uniq.size());
    Vec3 u = n.unitOrthogonal();
    Vec3 w = n.cross(u);
    std::vector<std::pair<double, Vec3>> keyed;
    for (const auto& p : uniq) keyed.emplace_back(std::atan2((p - c).dot(w), (p - c).dot(u)), p);
    std::sort(keyed.begin(), keyed.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    PolyFace capf{n, d, {}};
    for (auto& kp : keyed) capf.verts.push_back(kp.second);
    out.push_back(std::move(capf));
  }
  return out;
}

inline double polytope_volume(const Polytope& poly) {
  if (poly.empty()) return 0.0;
  Vec3 o = Vec3::Zero();
  std::size_t count = 0;
  for (const auto& f : poly) {
    for (const auto& v : f.verts) {
      o += v;
      ++count;
    }
  }
  o /= static_cast<double>(count);
  double vol = 0.0;
  for (const auto& f : poly) {
    Vec3 area = Vec3::Zero();
    const std::size_t m = f.verts.size();
    for (std::size_t i = 0; i < m; ++i) area += f.verts[i].cross(f.verts[(i + 1) % m]);
    const double a = 0.5 * std::abs(area.dot(f.normal));
    vol += a * (f.offset - f.normal.dot(o)) / 3.0;
  }
  return std::max(vol, 0.0);
}

}  // namespace detail

/// Exact intersection volume of two oriented boxes.
inline double intersection_volume(const OrientedBox3& a, const OrientedBox3& b) {
  const double reach = 0.5 * (a.extents.norm() + b.extents.norm());
  if ((a.pose.translation - b.pose.translation).norm() > reach) return 0.0;
  const double eps = 1e-12 * std::max(a.extents.maxCoeff(), b.extents.maxCoeff());
  auto poly = detail::box_polytope(a);
  for (const auto& [n, d] : detail::box_halfspaces(b)) {
    poly = detail::clip(poly, n, d, eps);
    if (poly.empty()) return 0.0;
  }
  return std::min(detail::polytope_volume(poly), std::min(a.volume(), b.volume()));
}

inline double iou3d(const OrientedBox3& a, const OrientedBox3& b) {
  const double inter = intersection_volume(a, b);
  const double uni = a.volume() + b.volume() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Monte-Carlo IoU estimate: uniform samples in the axis-aligned bounds of
/// both boxes, IoU = n(a and b) / n(a or b). Deterministic per seed.
inline double iou3d_mc(const OrientedBox3& a, const OrientedBox3& b, std::size_t samples,
                       std::uint64_t seed) {
  if (samples < 1) throw Error(Errc::InvalidArgument, "need at least one sample");
  Vec3 lo = a.corners()[0], hi = lo;
  for (const auto* box : {&a, &b}) {
    for (const auto& c : box->corners()) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  auto rng = make_engine(seed, {});
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y()), uz(lo.z(), hi.z());
  std::size_t in_a = 0, in_b = 0, in_both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    const bool ia = a.contains(p), ib = b.contains(p);
    in_a += ia;
    in_b += ib;
    in_both += ia && ib;
  }
  const std::size_t uni = in_a + in_b - in_both;
  return uni == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Detection records and metrics
// ---------------------------------------------------------------------------

/// Categories treated as rotationally symmetric about the canonical y axis.
inline bool is_symmetric_category(const std::string& category) {
  return category == "bottle" || category == "bowl" || category == "can";
}

struct PoseEstimate {
  RigidPose pose;
  double scale = 1.0;  ///< meters, bbox diagonal
  Vec3 canonical_extents = Vec3::Constant(1.0 / std::sqrt(3.0));  ///< unit diagonal

  OrientedBox3 box() const { return box_from_estimate(pose, scale, canonical_extents); }
};

struct Detection {
  std::string image_id;
  std::string category;
  double confidence = 1.0;
  PoseEstimate estimate;
};

struct GroundTruth {
  std::string image_id;
  std::string category;
  PoseEstimate estimate;
};

struct DetectionRecord {
  std::string category;
  double confidence = 1.0;
  PoseEstimate prediction;
  std::optional<PoseEstimate> ground_truth;
};

/// Records of one category plus its number of ground-truth objects.
struct CategoryRecords {
  std::vector<DetectionRecord> records;
  std::size_t num_ground_truth = 0;
};

/// Keyed by category; std::map keeps lexicographic order.
using RecordSet = std::map<std::string, CategoryRecords>;

struct EvalOptions {
  bool symmetry = true;
};

struct PoseMetrics {
  double iou = 0.0;
  double rot_err_deg = 0.0;
  double trans_err_cm = 0.0;
};

inline PoseMetrics pose_metrics(const std::string& category, const PoseEstimate& pred,
                                const PoseEstimate& gt, const EvalOptions& opt = {}) {
  PoseMetrics m;
  m.iou = iou3d(pred.box(), gt.box());
  m.rot_err_deg = (opt.symmetry && is_symmetric_category(category))
                      ? rotation_error_symmetric_deg(pred.pose.rotation, gt.pose.rotation, Vec3::UnitY())
                      : rotation_error_deg(pred.pose.rotation, gt.pose.rotation);
  m.trans_err_cm = translation_error_cm(pred.pose.translation, gt.pose.translation);
  return m;
}

inline PoseMetrics pose_metrics(const DetectionRecord& rec, const EvalOptions& opt = {}) {
  if (!rec.ground_truth) throw Error(Errc::NoGroundTruth, "detection has no matched ground truth");
  return pose_metrics(rec.category, rec.prediction, *rec.ground_truth, opt);
}

namespace detail {
inline std::vector<std::size_t> confidence_order(std::size_t n,
                                                 const std::function<double(std::size_t)>& conf) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf(a) > conf(b); });
  return order;
}
}  // namespace detail

/// Greedy matching within each (image, category): detections in descending
/// confidence take the unmatched ground truth of highest IoU; IoU ties go to
/// the nearest center, then the earliest ground truth. Detections are
/// accounted under their predicted category only.
inline RecordSet match_detections(const std::vector<Detection>& dets,
                                  const std::vector<GroundTruth>& gts) {
  RecordSet out;
  for (const auto& g : gts) ++out[g.category].num_ground_truth;

  std::vector<bool> used(gts.size(), false);
  const auto order = detail::confidence_order(dets.size(), [&](std::size_t i) { return dets[i].confidence; });
  std::vector<std::optional<std::size_t>> matched(dets.size());
  for (std::size_t di : order) {
    const auto& d = dets[di];
    const OrientedBox3 dbox = d.estimate.box();
    std::optional<std::size_t> best;
    double best_iou = -1.0, best_dist = 0.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      const auto& g = gts[gi];
      if (used[gi] || g.image_id != d.image_id || g.category != d.category) continue;
      const double iou = iou3d(dbox, g.estimate.box());
      const double dist = (g.estimate.pose.translation - d.estimate.pose.translation).norm();
      if (iou > best_iou || (iou == best_iou && dist < best_dist)) {
        best = gi;
        best_iou = iou;
        best_dist = dist;
      }
    }
    if (best) {
      used[*best] = true;
      matched[di] = best;
    }
  }
  for (std::size_t di = 0; di < dets.size(); ++di) {
    const auto& d = dets[di];
    DetectionRecord rec{d.category, d.confidence, d.estimate, std::nullopt};
    if (matched[di]) rec.ground_truth = gts[*matched[di]].estimate;
    out[d.category].records.push_back(std::move(rec));
  }
  return out;
}

using MetricPredicate = std::function<bool(const PoseMetrics&)>;

/// Confidence and metrics of one record (metrics absent when unmatched).
struct ScoredRecord {
  double confidence = 1.0;
  std::optional<PoseMetrics> metrics;
};

inline std::vector<ScoredRecord> score_records(const CategoryRecords& cat, const EvalOptions& opt = {}) {
  std::vector<ScoredRecord> out;
  out.reserve(cat.records.size());
  for (const auto& r : cat.records) {
    ScoredRecord s{r.confidence, std::nullopt};
    if (r.ground_truth) s.metrics = pose_metrics(r, opt);
    out.push_back(s);
  }
  return out;
}

/// Area under the precision-recall curve with the monotone precision
/// envelope. A detection is a true positive iff it is matched and passes
/// `pred`. Throws EmptyRecordSet when there is no ground truth.
inline double average_precision(std::span<const ScoredRecord> scored, std::size_t num_ground_truth,
                                const MetricPredicate& pred) {
  if (num_ground_truth == 0) throw Error(Errc::EmptyRecordSet, "no ground truth objects");
  const auto order = detail::confidence_order(scored.size(), [&](std::size_t i) { return scored[i].confidence; });

  std::vector<double> recall{0.0}, precision{0.0};
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& s = scored[order[rank]];
    if (s.metrics && pred(*s.metrics)) ++tp;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_ground_truth));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
  }
  recall.push_back(1.0);
  precision.push_back(0.0);
  for (std::size_t i = precision.size() - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < recall.size(); ++i) {
    ap += (recall[i + 1] - recall[i]) * precision[i + 1];
  }
  return std::clamp(ap, 0.0, 1.0);
}

inline double average_precision(const CategoryRecords& cat, const MetricPredicate& pred,
                                const EvalOptions& opt = {}) {
  if (cat.records.empty() && cat.num_ground_truth == 0) {
    throw Error(Errc::EmptyRecordSet, "empty record set");
  }
  const auto scored = score_records(cat, opt);
  return average_precision(scored, cat.num_ground_truth, pred);
}

// ---------------------------------------------------------------------------
// mAP table
// ---------------------------------------------------------------------------

struct MetricThresholds {
  double iou_loose = 0.5;
  double iou_strict = 0.75;
  double trans_cm = 10.0;
  double rot_deg = 10.0;
};

inline constexpr std::array<const char*, 5> kMetricColumns{"IoU50", "IoU75", "10cm", "10°", "10°10cm"};

struct MetricRow {
  std::string category;
  std::array<double, 5> ap{};  ///< fractions in [0, 1], column order of kMetricColumns
};

struct MetricTable {
  std::vector<MetricRow> rows;  ///< per category, lexicographic
  MetricRow mean{"mean", {}};
  std::vector<std::string> warnings;

  std::string to_csv() const {
    std::ostringstream os;
    os << "category";
    for (const char* c : kMetricColumns) os << ',' << c;
    os << '\n';
    auto line = [&](const MetricRow& r) {
      os << r.category;
      for (double v : r.ap) os << ',' << format_fixed(100.0 * v, 1);
      os << '\n';
    };
    for (const auto& r : rows) line(r);
    line(mean);
    return os.str();
  }

  /// Aligned text rendering; one decimal, percentages.
  std::string to_text() const {
    std::size_t w0 = std::string("category").size();
    for (const auto& r : rows) w0 = std::max(w0, r.category.size());
    std::ostringstream os;
    auto pad = [](const std::string& s, std::size_t w, bool right) {
      // column widths count code points so the degree sign aligns
      std::size_t len = 0;
      for (unsigned char ch : s) len += (ch & 0xC0) != 0x80;
      const std::string fill(w > len ? w - len : 0, ' ');
      return right ? fill + s : s + fill;
    };
    constexpr std::size_t kw = 9;
    os << pad("category", w0, false);
    for (const char* c : kMetricColumns) os << ' ' << pad(c, kw, true);
    os << '\n';
    auto line = [&](const MetricRow& r) {
      os << pad(r.category, w0, false);
      for (double v : r.ap) os << ' ' << pad(format_fixed(100.0 * v, 1), kw, true);
      os << '\n';
    };
    for (const auto& r : rows) line(r);
    line(mean);
    return os.str();
  }
};

inline std::array<MetricPredicate, 5> metric_predicates(const MetricThresholds& t) {
  return {
      [t](const PoseMetrics& m) { return m.iou >= t.iou_loose; },
      [t](const PoseMetrics& m) { return m.iou >= t.iou_strict; },
      [t](const PoseMetrics& m) { return m.trans_err_cm <= t.trans_cm; },
      [t](const PoseMetrics& m) { return m.rot_err_deg <= t.rot_deg; },
      [t](const PoseMetrics& m) { return m.rot_err_deg <= t.rot_deg && m.trans_err_cm <= t.trans_cm; },
  };
}

/// Per-category AP for the five benchmark predicates and their unweighted
/// mean. Categories without ground truth are skipped with a warning.
inline MetricTable metric_table(const RecordSet& records, const MetricThresholds& t = {},
                                const EvalOptions& opt = {}) {
  MetricTable table;
  const auto preds = metric_predicates(t);
  for (const auto& [category, cat] : records) {
    if (cat.num_ground_truth == 0) {
      table.warnings.push_back("category '" + category +
                               "' has no ground truth; omitted from the mean");
      continue;
    }
    const auto scored = score_records(cat, opt);
    MetricRow row{category, {}};
    for (std::size_t j = 0; j < preds.size(); ++j) {
      row.ap[j] = average_precision(scored, cat.num_ground_truth, preds[j]);
    }
    table.rows.push_back(std::move(row));
  }
  if (!table.rows.empty()) {
    for (std::size_t j = 0; j < table.mean.ap.size(); ++j) {
      double s = 0.0;
      for (const auto& r : table.rows) s += r.ap[j];
      table.mean.ap[j] = s / static_cast<double>(table.rows.size());
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// AP curves
// ---------------------------------------------------------------------------

enum class MetricAxis { Iou, Rotation, Translation };

inline const char* to_string(MetricAxis axis) {
  switch (axis) {
    case MetricAxis::Iou: return "iou";
    case MetricAxis::Rotation: return "rotation";
    case MetricAxis::Translation: return "translation";
  }
  return "?";
}

struct ApCurve {
  MetricAxis axis = MetricAxis::Iou;
  std::vector<double> thresholds;
  std::vector<std::string> categories;
  std::vector<std::vector<double>> per_category;  ///< [category][threshold]
  std::vector<double> mean;                       ///< [threshold]

  std::string to_csv() const {
    std::ostringstream os;
    os << "threshold";
    for (const auto& c : categories) os << ',' << c;
    os << ",mean\n";
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      os << format_g17(thresholds[i]);
      for (const auto& row : per_category) os << ',' << format_g17(row[i]);
      os << ',' << format_g17(mean[i]) << '\n';
    }
    return os.str();
  }
};

/// AP at each grid threshold: IoU passes with >=, errors with <=.
inline ApCurve ap_curves(const RecordSet& records, MetricAxis axis, const std::vector<double>& grid,
                         const EvalOptions& opt = {}) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw Error(Errc::InvalidArgument, "threshold grid must be strictly increasing");
  }
  ApCurve curve;
  curve.axis = axis;
  curve.thresholds = grid;
  curve.mean.assign(grid.size(), 0.0);
  for (const auto& [category, cat] : records) {
    if (cat.num_ground_truth == 0) continue;
    const auto scored = score_records(cat, opt);
    std::vector<double> row;
    for (double thr : grid) {
      MetricPredicate p;
      switch (axis) {
        case MetricAxis::Iou: p = [thr](const PoseMetrics& m) { return m.iou >= thr; }; break;
        case MetricAxis::Rotation: p = [thr](const PoseMetrics& m) { return m.rot_err_deg <= thr; }; break;
        case MetricAxis::Translation: p = [thr](const PoseMetrics& m) { return m.trans_err_cm <= thr; }; break;
      }
      row.push_back(average_precision(scored, cat.num_ground_truth, p));
    }
    curve.categories.push_back(category);
    curve.per_category.push_back(std::move(row));
  }
  if (!curve.categories.empty()) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double s = 0.0;
      for (const auto& row : curve.per_category) s += row[i];
      curve.mean[i] = s / static_cast<double>(curve.categories.size());
    }
  }
  return curve;
}

}  // namespace catpose
