#pragma once

/**
 * @file geometry.hpp
 * @brief Rotations, rigid/similarity transforms, pinhole projection and the
 * pose error measures used throughout the evaluation code.
 *
 * Rotations are stored as 3x3 matrices. Angles cross the API in degrees
 * except where a function name says otherwise.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "catpose/error.hpp"

namespace catpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using Point2 = Vec2;
using Point3 = Vec3;
using PointSet3 = std::vector<Point3>;

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Element of SO(3). Construction through from_matrix() validates
/// orthonormality and handedness to 1e-9.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return {}; }

  static Rotation from_matrix(const Mat3& m) {
    if (!m.allFinite()) {
      throw Error(Errc::InvalidArgument, "rotation has non-finite entries");
    }
    const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    const double det = m.determinant();
    if (ortho > 1e-9 || std::abs(det - 1.0) > 1e-9) {
      throw Error(Errc::InvalidArgument, "matrix is not a proper rotation");
    }
    return Rotation(m);
  }

  /// Nearest proper rotation in the Frobenius sense (polar decomposition).
  static Rotation nearest(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    return Rotation(svd.matrixU() * d * svd.matrixV().transpose());
  }

  /// Rodrigues' formula; `omega` is an axis-angle vector in radians.
  static Rotation exp(const Vec3& omega) {
    const double theta = omega.norm();
    const Mat3 k = skew(omega);
    if (theta == 0.0) return {};
    const double a = std::sin(theta) / theta;
    const double h = std::sin(0.5 * theta) / theta;
    return Rotation(Mat3::Identity() + a * k + 2.0 * h * h * k * k);
  }

  static Rotation axis_angle_deg(const Vec3& axis, double deg) {
    return exp(axis.normalized() * deg2rad(deg));
  }
  static Rotation about_x(double deg) { return axis_angle_deg(Vec3::UnitX(), deg); }
  static Rotation about_y(double deg) { return axis_angle_deg(Vec3::UnitY(), deg); }
  static Rotation about_z(double deg) { return axis_angle_deg(Vec3::UnitZ(), deg); }

  /// Quaternion stored (w, x, y, z).
  static Rotation from_quaternion(const std::array<double, 4>& wxyz) {
    Eigen::Quaterniond q(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    if (q.norm() < 1e-12) throw Error(Errc::InvalidArgument, "zero quaternion");
    q.normalize();
    return Rotation(q.toRotationMatrix());
  }

  std::array<double, 4> quaternion() const {
    Eigen::Quaterniond q(m_);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return {q.w(), q.x(), q.y(), q.z()};
  }

  /// Axis-angle vector (radians).
  Vec3 log() const {
    const Vec3 v(m_(2, 1) - m_(1, 2), m_(0, 2) - m_(2, 0), m_(1, 0) - m_(0, 1));
    const double s = 0.5 * v.norm();
    const double c = std::clamp(0.5 * (m_.trace() - 1.0), -1.0, 1.0);
    const double theta = std::atan2(s, c);
    if (theta < 1e-10) return 0.5 * v;
    if (s > 1e-6) return v * (theta / (2.0 * s));
    // near pi: axis from the symmetric part
    const Mat3 b = 0.5 * (m_ + Mat3::Identity());
    Eigen::Index i = 0;
    b.diagonal().maxCoeff(&i);
    Vec3 axis = b.col(i) / std::sqrt(std::max(b(i, i), 1e-300));
    axis.normalize();
    if (axis.dot(v) < 0.0) axis = -axis;
    return axis * theta;
  }

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }

  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// Rotation plus translation in meters; maps object frame to camera frame.
struct RigidPose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidPose inverse() const {
    const Rotation rt = rotation.inverse();
    return {rt, -(rt * translation)};
  }
  RigidPose compose(const RigidPose& inner) const {
    return {rotation * inner.rotation, rotation * inner.translation + translation};
  }
};

struct SimilarityTransform {
  double scale = 1.0;
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  RigidPose rigid() const { return {rotation, translation}; }
};

struct CameraIntrinsics {
  double fx = 577.5;
  double fy = 577.5;
  double cx = 319.5;
  double cy = 239.5;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy)) {
      throw Error(Errc::InvalidArgument, "intrinsics require fx > 0, fy > 0");
    }
  }
};

inline Point2 project(const Point3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) throw Error(Errc::NonPositiveDepth, "point at or behind camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

inline Point3 backproject(const Point2& uv, double depth, const CameraIntrinsics& k) {
  return {(uv.x() - k.cx) / k.fx * depth, (uv.y() - k.cy) / k.fy * depth, depth};
}

/// Geodesic angle between two rotations, in degrees.
///
/// Equal to arccos((trace(a b^T) - 1) / 2) but evaluated as atan2 of the
/// antisymmetric and symmetric parts so that small angles keep full precision.
inline double rotation_error_deg(const Rotation& a, const Rotation& b) {
  const Mat3 r = a.matrix() * b.matrix().transpose();
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = 0.5 * v.norm();
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  return std::clamp(rad2deg(std::atan2(s, c)), 0.0, 180.0);
}

/// Rotation error modulo any rotation about `axis` (object frame), i.e. the
/// angle between the transformed symmetry axes.
inline double rotation_error_symmetric_deg(const Rotation& a, const Rotation& b,
                                           const Vec3& axis) {
  if (std::abs(axis.norm() - 1.0) > 1e-9) {
    throw Error(Errc::NonUnitAxis, "symmetry axis must have unit norm");
  }
  const Vec3 ua = a * axis;
  const Vec3 ub = b * axis;
  const double c = std::clamp(ua.dot(ub), -1.0, 1.0);
  return std::clamp(rad2deg(std::atan2(ua.cross(ub).norm(), c)), 0.0, 180.0);
}

inline double translation_error_cm(const Vec3& a, const Vec3& b) {
  return 100.0 * (a - b).norm();
}

/// Least-squares similarity (or rigid, when estimate_scale is false) mapping
/// src onto dst. Reflections are suppressed by flipping the sign of the
/// smallest singular direction.
///
/// Throws DimensionMismatch, DegenerateConfiguration (fewer than 3 points or
/// cross-covariance rank below 2).
inline SimilarityTransform umeyama_align(const PointSet3& src, const PointSet3& dst,
                                         bool estimate_scale) {
  if (src.size() != dst.size()) {
    throw Error(Errc::DimensionMismatch, "src and dst sizes differ");
  }
  if (src.size() < 3) {
    throw Error(Errc::DegenerateConfiguration, "need at least 3 point pairs");
  }
  const double n = static_cast<double>(src.size());
  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;

  Mat3 cov = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 ds = src[i] - mu_s;
    cov += (dst[i] - mu_d) * ds.transpose();
    var_s += ds.squaredNorm();
  }
  cov /= n;
  var_s /= n;

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) < 1e-12 * sv(0)) {
    throw Error(Errc::DegenerateConfiguration, "cross-covariance rank below 2");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 sign(1.0, 1.0, 1.0);
  if (u.determinant() * v.determinant() < 0.0) sign(2) = -1.0;

  const Mat3 r = u * sign.asDiagonal() * v.transpose();
  const double s = estimate_scale ? sv.dot(sign) / var_s : 1.0;

  SimilarityTransform out;
  out.scale = s;
  out.rotation = Rotation::nearest(r);
  out.translation = mu_d - s * (out.rotation * mu_s);
  return out;
}

}  // namespace catpose
