#pragma once

/**
 * @file nocs.hpp
 * @brief Normalized object coordinate space: shape priors, deformation
 * fields, reconstructed models and soft correspondence matrices.
 *
 * Normalization convention: points centered on their mean and scaled so the
 * tight axis-aligned bounding box has unit diagonal. The metric scale of an
 * object is therefore the diagonal length of its tight bounding box.
 */

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "catpose/error.hpp"
#include "catpose/geometry.hpp"

namespace catpose {

struct BoundingBox3 {
  Vec3 min;
  Vec3 max;

  Vec3 extents() const { return max - min; }
  double diagonal() const { return extents().norm(); }
};

inline BoundingBox3 tight_bbox(const PointSet3& pts) {
  if (pts.empty()) throw Error(Errc::EmptyList, "bounding box of empty point set");
  BoundingBox3 box{pts.front(), pts.front()};
  for (const auto& p : pts) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

inline Vec3 centroid(const PointSet3& pts) {
  if (pts.empty()) throw Error(Errc::EmptyList, "centroid of empty point set");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

inline void require_finite(const PointSet3& pts, const char* what) {
  for (const auto& p : pts) {
    if (!p.allFinite()) throw Error(Errc::InvalidArgument, std::string(what) + " has non-finite entries");
  }
}

/// Category mean shape in normalized coordinates.
class ShapePrior {
 public:
  ShapePrior(std::string category, PointSet3 points)
      : category_(std::move(category)), points_(std::move(points)) {
    require_finite(points_, "shape prior");
    if (points_.empty()) throw Error(Errc::EmptyList, "shape prior has no points");
    if (std::abs(tight_bbox(points_).diagonal() - 1.0) > 1e-6) {
      throw Error(Errc::InvalidArgument, "shape prior bbox diagonal must be 1");
    }
    if (centroid(points_).norm() > 1e-6) {
      throw Error(Errc::InvalidArgument, "shape prior must be centered at the origin");
    }
  }

  const std::string& category() const { return category_; }
  const PointSet3& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::string category_;
  PointSet3 points_;
};

struct DeformationField {
  PointSet3 offsets;
};

/// Deformed prior. Only finiteness is enforced; deformation may move points
/// beyond the prior's extent.
class NocsModel {
 public:
  NocsModel() = default;
  explicit NocsModel(PointSet3 points) : points_(std::move(points)) {
    require_finite(points_, "NOCS model");
  }

  const PointSet3& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  PointSet3 points_;
};

inline NocsModel apply_deformation(const PointSet3& base, const DeformationField& d) {
  if (base.size() != d.offsets.size()) {
    throw Error(Errc::DimensionMismatch, "deformation field size differs from prior");
  }
  require_finite(d.offsets, "deformation field");
  PointSet3 out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + d.offsets[i];
  return NocsModel(std::move(out));
}

inline NocsModel apply_deformation(const ShapePrior& prior, const DeformationField& d) {
  return apply_deformation(prior.points(), d);
}

/// Row-stochastic soft assignment of M observations to N model points.
///
/// Rows that miss unit sum by at most 1e-3 are renormalized; larger
/// deviations are rejected with RowNotStochastic.
class CorrespondenceMatrix {
 public:
  static constexpr double kExactTolerance = 1e-6;
  static constexpr double kRenormalizeTolerance = 1e-3;

  explicit CorrespondenceMatrix(Eigen::MatrixXd entries) : c_(std::move(entries)) {
    if (c_.rows() == 0 || c_.cols() == 0) {
      throw Error(Errc::DimensionMismatch, "correspondence matrix is empty");
    }
    if (!c_.allFinite() || (c_.array() < 0.0).any()) {
      throw Error(Errc::RowNotStochastic, "entries must be finite and nonnegative");
    }
    for (Eigen::Index i = 0; i < c_.rows(); ++i) {
      const double s = c_.row(i).sum();
      const double dev = std::abs(s - 1.0);
      if (dev <= kExactTolerance) continue;
      if (dev > kRenormalizeTolerance) {
        throw Error(Errc::RowNotStochastic,
                    "row " + std::to_string(i) + " sums to " + std::to_string(s));
      }
      c_.row(i) /= s;
    }
  }

  static CorrespondenceMatrix from_dense(Eigen::Index rows, Eigen::Index cols,
                                         const std::vector<double>& row_major) {
    if (rows <= 0 || cols <= 0 || static_cast<Eigen::Index>(row_major.size()) != rows * cols) {
      throw Error(Errc::DimensionMismatch, "dense data length differs from rows*cols");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = row_major[static_cast<std::size_t>(i * cols + j)];
    return CorrespondenceMatrix(std::move(m));
  }

  /// Entries not listed are zero; repeated (i, j) pairs accumulate.
  static CorrespondenceMatrix from_triplets(Eigen::Index rows, Eigen::Index cols,
                                            const std::vector<std::tuple<Eigen::Index, Eigen::Index, double>>& triplets) {
    if (rows <= 0 || cols <= 0) throw Error(Errc::DimensionMismatch, "non-positive matrix shape");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
    for (const auto& [i, j, v] : triplets) {
      if (i < 0 || i >= rows || j < 0 || j >= cols) {
        throw Error(Errc::DimensionMismatch, "triplet index out of range");
      }
      m(i, j) += v;
    }
    return CorrespondenceMatrix(std::move(m));
  }

  Eigen::Index rows() const { return c_.rows(); }
  Eigen::Index cols() const { return c_.cols(); }
  const Eigen::MatrixXd& entries() const { return c_; }

 private:
  Eigen::MatrixXd c_;
};

/// C * P: row i is the convex combination of model points weighted by row i.
inline PointSet3 assign(const CorrespondenceMatrix& c, const NocsModel& model) {
  if (static_cast<std::size_t>(c.cols()) != model.size()) {
    throw Error(Errc::DimensionMismatch, "matrix columns differ from model point count");
  }
  Eigen::MatrixXd p(c.cols(), 3);
  for (Eigen::Index j = 0; j < c.cols(); ++j) p.row(j) = model.points()[static_cast<std::size_t>(j)].transpose();
  const Eigen::MatrixXd out = c.entries() * p;
  PointSet3 pts(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) pts[static_cast<std::size_t>(i)] = out.row(i).transpose();
  return pts;
}

/// Per-row argmax; ties resolve to the lowest column.
inline std::vector<std::size_t> harden(const CorrespondenceMatrix& c) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(c.rows()));
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < c.cols(); ++j) {
      if (c.entries()(i, j) > c.entries()(i, best)) best = j;
    }
    idx[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return idx;
}

struct NormalizedModel {
  PointSet3 points;
  double scale = 1.0;  ///< metric bbox diagonal of the input
  Vec3 offset = Vec3::Zero();  ///< input centroid
};

inline NormalizedModel normalize_model(const PointSet3& pts) {
  if (pts.size() < 2) throw Error(Errc::DegenerateExtent, "need at least 2 points");
  require_finite(pts, "model");
  NormalizedModel out;
  out.offset = centroid(pts);
  out.scale = tight_bbox(pts).diagonal();
  if (out.scale < 1e-12) throw Error(Errc::DegenerateExtent, "bbox diagonal below 1e-12");
  out.points.reserve(pts.size());
  for (const auto& p : pts) out.points.push_back((p - out.offset) / out.scale);
  return out;
}

inline PointSet3 denormalize(const NormalizedModel& m) {
  PointSet3 out;
  out.reserve(m.points.size());
  for (const auto& p : m.points) out.push_back(p * m.scale + m.offset);
  return out;
}

}  // namespace catpose
