#pragma once

/**
 * @file pnp.hpp
 * @brief Perspective-n-Point solvers: a P3P minimal solver with a fourth
 * disambiguation point, a DLT least-squares initializer, Gauss-Newton
 * reprojection refinement and a seeded RANSAC loop around them.
 *
 * Model points are expected in metric units. Category-level callers scale
 * their normalized coordinates first (see scale_model_points); rotation is
 * unaffected by that scale, translation scales with it.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "catpose/error.hpp"
#include "catpose/geometry.hpp"
#include "catpose/random.hpp"

namespace catpose {

struct Correspondence2D3D {
  Point2 image;  ///< pixels
  Point3 model;  ///< metric model frame
};

using Correspondences = std::vector<Correspondence2D3D>;

struct RansacConfig {
  double reprojection_threshold = 2.0;  ///< pixels, strict inequality
  int max_iterations = 1000;
  double confidence = 0.999;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(reprojection_threshold > 0.0)) {
      throw Error(Errc::InvalidArgument, "reprojection threshold must be positive");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
      throw Error(Errc::InvalidArgument, "confidence must lie in (0, 1)");
    }
    if (max_iterations < 1) throw Error(Errc::InvalidArgument, "max_iterations must be >= 1");
  }
};

struct PnPResult {
  RigidPose pose;
  std::vector<bool> inlier_mask;
  double mean_reprojection_error = 0.0;  ///< over inliers only
  int iterations_used = 0;

  std::size_t inlier_count() const {
    return static_cast<std::size_t>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
  }
};

inline constexpr std::size_t kMinimalSampleSize = 4;

inline PointSet3 scale_model_points(double s, const PointSet3& pts) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw Error(Errc::NonPositiveScale, "model scale must be positive");
  }
  PointSet3 out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(s * p);
  return out;
}

inline Correspondences scale_model_points(double s, const Correspondences& corr) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw Error(Errc::NonPositiveScale, "model scale must be positive");
  }
  Correspondences out = corr;
  for (auto& c : out) c.model *= s;
  return out;
}

/// Pixel distance between the projected model point and its observation;
/// +inf when the point is not in front of the camera.
inline double reprojection_error(const RigidPose& pose, const Correspondence2D3D& c,
                                 const CameraIntrinsics& k) {
  const Vec3 pc = pose.apply(c.model);
  if (!(pc.z() > 0.0)) return std::numeric_limits<double>::infinity();
  const Vec2 uv(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  return (uv - c.image).norm();
}

/// Sum of squared reprojection residuals.
inline double reprojection_cost(const RigidPose& pose, std::span<const Correspondence2D3D> corr,
                                const CameraIntrinsics& k) {
  double cost = 0.0;
  for (const auto& c : corr) {
    const double e = reprojection_error(pose, c, k);
    cost += e * e;
  }
  return cost;
}

/// Local update used by refinement: R <- exp(omega) R, t <- t + dt, with
/// delta = (omega, dt).
inline RigidPose perturb(const RigidPose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  return {Rotation::exp(delta.head<3>()) * pose.rotation, pose.translation + delta.tail<3>()};
}

struct ReprojectionLinearization {
  Eigen::VectorXd residual;  ///< 2n, projected minus observed
  Eigen::MatrixXd jacobian;  ///< 2n x 6 with respect to perturb()'s delta
};

/// Residuals and their analytic Jacobian at `pose`.
inline ReprojectionLinearization linearize_reprojection(const RigidPose& pose,
                                                        std::span<const Correspondence2D3D> corr,
                                                        const CameraIntrinsics& k) {
  const auto n = static_cast<Eigen::Index>(corr.size());
  ReprojectionLinearization lin{Eigen::VectorXd(2 * n), Eigen::MatrixXd(2 * n, 6)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = corr[static_cast<std::size_t>(i)];
    const Vec3 rx = pose.rotation * c.model;
    const Vec3 pc = rx + pose.translation;
    if (!(pc.z() > 0.0)) throw Error(Errc::NonPositiveDepth, "point behind camera");
    const double iz = 1.0 / pc.z();
    lin.residual(2 * i) = k.fx * pc.x() * iz + k.cx - c.image.x();
    lin.residual(2 * i + 1) = k.fy * pc.y() * iz + k.cy - c.image.y();

    Eigen::Matrix<double, 2, 3> dproj;
    dproj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz,
             0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
    Eigen::Matrix<double, 3, 6> dpoint;
    dpoint.leftCols<3>() = -skew(rx);
    dpoint.rightCols<3>() = Mat3::Identity();
    lin.jacobian.middleRows<2>(2 * i) = dproj * dpoint;
  }
  return lin;
}

struct RefineOptions {
  int max_iterations = 50;
  double min_step_norm = 1e-10;
  double min_cost_decrease = 1e-12;
};

struct RefineReport {
  RigidPose pose;
  std::vector<double> cost_history;  ///< initial cost followed by each accepted iterate
  int iterations = 0;

  double initial_cost() const { return cost_history.front(); }
  double final_cost() const { return cost_history.back(); }
};

/// Gauss-Newton on the summed squared reprojection error. Points in front of
/// the camera at `initial` form the active set; a step that pushes any of
/// them behind the camera, or that does not lower the cost, is halved
/// until it does. The returned cost never exceeds the initial cost.
inline RefineReport refine_pnp_report(const RigidPose& initial,
                                      std::span<const Correspondence2D3D> corr,
                                      const CameraIntrinsics& k,
                                      const RefineOptions& opt = {}) {
  Correspondences active;
  active.reserve(corr.size());
  for (const auto& c : corr) {
    if (initial.apply(c.model).z() > 0.0) active.push_back(c);
  }
  if (active.empty()) {
    throw Error(Errc::DivergedBehindCamera, "no correspondence in front of the camera");
  }
  if (active.size() < kMinimalSampleSize) {
    throw Error(Errc::DivergedBehindCamera, "fewer than 4 points in front of the camera");
  }

  RefineReport report;
  report.pose = initial;
  double cost = reprojection_cost(initial, active, k);
  report.cost_history.push_back(cost);

  auto all_in_front = [&](const RigidPose& p) {
    return std::all_of(active.begin(), active.end(),
                       [&](const Correspondence2D3D& c) { return p.apply(c.model).z() > 0.0; });
  };

  for (int it = 0; it < opt.max_iterations; ++it) {
    const auto lin = linearize_reprojection(report.pose, active, k);
    const Eigen::Matrix<double, 6, 6> h = lin.jacobian.transpose() * lin.jacobian;
    const Eigen::Matrix<double, 6, 1> g = lin.jacobian.transpose() * lin.residual;
    Eigen::Matrix<double, 6, 1> step = -h.ldlt().solve(g);
    if (!step.allFinite()) break;

    bool accepted = false;
    double new_cost = cost;
    RigidPose candidate;
    for (int halving = 0; halving < 20; ++halving) {
      candidate = perturb(report.pose, step);
      if (all_in_front(candidate)) {
        new_cost = reprojection_cost(candidate, active, k);
        if (new_cost < cost) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const double decrease = cost - new_cost;
    report.pose = candidate;
    cost = new_cost;
    report.cost_history.push_back(cost);
    report.iterations = it + 1;
    if (step.norm() < opt.min_step_norm || decrease < opt.min_cost_decrease) break;
  }
  report.pose.rotation = Rotation::nearest(report.pose.rotation.matrix());
  return report;
}

inline RigidPose refine_pnp(const RigidPose& initial, std::span<const Correspondence2D3D> corr,
                            const CameraIntrinsics& k) {
  return refine_pnp_report(initial, corr, k).pose;
}

namespace detail {

/// Real roots of sum_i coeffs[i] x^i, via companion-matrix eigenvalues
/// polished with Newton steps.
inline std::vector<double> real_polynomial_roots(std::vector<double> coeffs) {
  double scale = 0.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (coeffs.size() > 1 && std::abs(coeffs.back()) <= 1e-14 * scale) coeffs.pop_back();
  const auto degree = static_cast<Eigen::Index>(coeffs.size()) - 1;
  if (degree < 1) return {};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (Eigen::Index i = 0; i < degree; ++i) {
    companion(0, i) = -coeffs[static_cast<std::size_t>(degree - 1 - i)] / coeffs.back();
    if (i + 1 < degree) companion(i + 1, i) = 1.0;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  const auto eig = es.eigenvalues();

  auto eval = [&](double x, double& dp) {
    double p = 0.0;
    dp = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;) {
      dp = dp * x + p;
      p = p * x + coeffs[i];
    }
    return p;
  };

  std::vector<double> roots;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const double re = eig(i).real();
    if (std::abs(eig(i).imag()) > 1e-6 * std::max(1.0, std::abs(re))) continue;
    double x = re;
    for (int it = 0; it < 8; ++it) {
      double dp = 0.0;
      const double p = eval(x, dp);
      if (dp == 0.0) break;
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    if (std::isfinite(x)) roots.push_back(x);
  }
  return roots;
}

inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline Vec3 bearing(const Point2& uv, const CameraIntrinsics& k) {
  return Vec3((uv.x() - k.cx) / k.fx, (uv.y() - k.cy) / k.fy, 1.0).normalized();
}

}  // namespace detail

/// Grunert-style P3P. Distances along the three bearings are s1 = x,
/// s2 = u x, s3 = v x; eliminating x and u from the law-of-cosines system
/// leaves a quartic in v. Returns every real, positive-depth solution.
inline std::vector<RigidPose> solve_p3p(std::span<const Correspondence2D3D> corr,
                                        const CameraIntrinsics& k) {
  if (corr.size() != 3) throw Error(Errc::InvalidArgument, "P3P takes exactly 3 points");
  const Vec3& x1 = corr[0].model;
  const Vec3& x2 = corr[1].model;
  const Vec3& x3 = corr[2].model;
  const double e12 = (x2 - x1).norm(), e13 = (x3 - x1).norm();
  if (e12 == 0.0 || e13 == 0.0 || (x2 - x1).cross(x3 - x1).norm() < 1e-9 * e12 * e13) {
    throw Error(Errc::DegenerateSample, "collinear or coincident model points");
  }

  const Vec3 f1 = detail::bearing(corr[0].image, k);
  const Vec3 f2 = detail::bearing(corr[1].image, k);
  const Vec3 f3 = detail::bearing(corr[2].image, k);

  const double a2 = (x2 - x3).squaredNorm();
  const double b2 = (x1 - x3).squaredNorm();
  const double c2 = (x1 - x2).squaredNorm();
  const double ca = f2.dot(f3), cb = f1.dot(f3), cg = f1.dot(f2);

  // Q(v) = 1 + v^2 - 2 v cb ;  u = N(v) / D(v)
  const double kca = (c2 - a2) / b2;
  const std::vector<double> q{1.0, -2.0 * cb, 1.0};
  const std::vector<double> num{kca - 1.0, -2.0 * kca * cb, 1.0 + kca};
  const std::vector<double> den{-2.0 * cg, 2.0 * ca};
  const std::vector<double> one_minus_kc{1.0 - c2 / b2 * q[0], -c2 / b2 * q[1], -c2 / b2 * q[2]};

  // N^2 - 2 cg N D + (1 - Kc) D^2 = 0
  const auto nn = detail::poly_mul(num, num);
  const auto nd = detail::poly_mul(num, den);
  const auto dd = detail::poly_mul(one_minus_kc, detail::poly_mul(den, den));
  std::vector<double> quartic(5, 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    quartic[i] = (i < nn.size() ? nn[i] : 0.0) - 2.0 * cg * (i < nd.size() ? nd[i] : 0.0) +
                 (i < dd.size() ? dd[i] : 0.0);
  }

  const PointSet3 model{x1, x2, x3};
  std::vector<RigidPose> out;
  for (double v : detail::real_polynomial_roots(quartic)) {
    if (!(v > 0.0)) continue;
    const double qv = 1.0 + v * v - 2.0 * v * cb;
    if (!(qv > 0.0)) continue;
    const double s1 = std::sqrt(b2 / qv);
    const double s3 = v * s1;
    // s2 from |X1 - X2|, disambiguated by |X2 - X3|
    const double disc = s1 * s1 * (cg * cg - 1.0) + c2;
    if (disc < -1e-9 * c2) continue;
    const double root = std::sqrt(std::max(disc, 0.0));
    for (double s2 : {s1 * cg + root, s1 * cg - root}) {
      if (!(s2 > 0.0)) continue;
      const double resid = std::abs(s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * ca - a2);
      if (resid > 1e-6 * std::max({a2, b2, c2})) continue;
      const PointSet3 cam{s1 * f1, s2 * f2, s3 * f3};
      try {
        out.push_back(umeyama_align(model, cam, false).rigid());
      } catch (const Error&) {
      }
      if (root == 0.0) break;
    }
  }
  return out;
}

/// P3P on the first three correspondences; candidates are filtered for
/// positive depth of all four model points and sorted by the reprojection
/// error of the fourth.
inline std::vector<RigidPose> solve_pnp_minimal(std::span<const Correspondence2D3D> corr,
                                                const CameraIntrinsics& k) {
  if (corr.size() != kMinimalSampleSize) {
    throw Error(Errc::InvalidArgument, "minimal solver takes exactly 4 correspondences");
  }
  const auto candidates = solve_p3p(corr.first(3), k);
  std::vector<std::pair<double, RigidPose>> scored;
  for (const auto& pose : candidates) {
    const bool in_front = std::all_of(corr.begin(), corr.end(), [&](const auto& c) {
      return pose.apply(c.model).z() > 0.0;
    });
    if (!in_front) continue;
    scored.emplace_back(reprojection_error(pose, corr[3], k), pose);
  }
  if (scored.empty()) throw Error(Errc::NoRealSolution, "no admissible P3P candidate");
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<RigidPose> out;
  out.reserve(scored.size());
  for (auto& s : scored) out.push_back(s.second);
  return out;
}

/// Normalized DLT followed by Gauss-Newton refinement. Throws RankDeficient
/// when the design matrix has a null space of dimension above one (e.g.
/// coplanar model points).
inline RigidPose solve_pnp_lsq(std::span<const Correspondence2D3D> corr,
                               const CameraIntrinsics& k) {
  if (corr.size() < 6) {
    throw Error(Errc::InsufficientCorrespondences, "least-squares PnP needs >= 6 points");
  }
  const auto n = static_cast<Eigen::Index>(corr.size());
  Vec3 centroid = Vec3::Zero();
  for (const auto& c : corr) centroid += c.model;
  centroid /= static_cast<double>(n);
  double rms = 0.0;
  for (const auto& c : corr) rms += (c.model - centroid).squaredNorm();
  rms = std::sqrt(rms / static_cast<double>(n));
  if (!(rms > 0.0)) throw Error(Errc::RankDeficient, "all model points coincide");

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = corr[static_cast<std::size_t>(i)];
    Eigen::Vector4d xh;
    xh << (c.model - centroid) / rms, 1.0;
    const double x = (c.image.x() - k.cx) / k.fx;
    const double y = (c.image.y() - k.cy) / k.fy;
    a.block<1, 4>(2 * i, 0) = xh.transpose();
    a.block<1, 4>(2 * i, 8) = -x * xh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = xh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -y * xh.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(10) < 1e-10 * sv(0)) {
    throw Error(Errc::RankDeficient, "DLT design matrix is rank deficient");
  }
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> proj;
  proj << p.segment<4>(0).transpose(), p.segment<4>(4).transpose(), p.segment<4>(8).transpose();

  Mat3 m = proj.leftCols<3>() / rms;
  Vec3 p4 = proj.col(3) - m * centroid;
  if (m.determinant() < 0.0) {
    m = -m;
    p4 = -p4;
  }
  Eigen::JacobiSVD<Mat3> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double lambda = msvd.singularValues().mean();
  if (!(lambda > 0.0)) throw Error(Errc::RankDeficient, "degenerate DLT projection");

  RigidPose init{Rotation::nearest(m), p4 / lambda};
  return refine_pnp(init, corr, k);
}

namespace detail {

inline int ransac_iteration_bound(double inlier_ratio, double confidence, int max_iterations) {
  const double w4 = std::pow(inlier_ratio, static_cast<double>(kMinimalSampleSize));
  if (w4 <= 0.0) return max_iterations;
  if (w4 >= 1.0 - 1e-15) return 1;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - w4);
  if (!std::isfinite(n) || n >= static_cast<double>(max_iterations)) return max_iterations;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

inline std::array<std::size_t, kMinimalSampleSize> draw_sample(std::uint64_t seed,
                                                               std::uint64_t iteration,
                                                               std::size_t n) {
  auto rng = make_engine(seed, {iteration});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::array<std::size_t, kMinimalSampleSize> idx{};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    bool fresh = false;
    while (!fresh) {
      idx[i] = pick(rng);
      fresh = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(i), idx[i]) ==
              idx.begin() + static_cast<std::ptrdiff_t>(i);
    }
  }
  return idx;
}

struct Consensus {
  std::size_t count = 0;
  double mean_error = std::numeric_limits<double>::infinity();
};

inline Consensus score(const RigidPose& pose, std::span<const Correspondence2D3D> corr,
                       const CameraIntrinsics& k, double threshold) {
  Consensus c;
  double sum = 0.0;
  for (const auto& x : corr) {
    const double e = reprojection_error(pose, x, k);
    if (e < threshold) {
      ++c.count;
      sum += e;
    }
  }
  if (c.count > 0) c.mean_error = sum / static_cast<double>(c.count);
  return c;
}

}  // namespace detail

/// RANSAC over 4-point minimal samples. Sample i is drawn from an engine
/// seeded by (rng_seed, i), so a fixed seed reproduces the result exactly.
/// Consensus ties are broken by lower mean inlier error, then by the earlier
/// iteration. The best hypothesis is refined on its consensus set and the
/// inlier mask is recomputed against the refined pose.
inline PnPResult ransac_pnp(std::span<const Correspondence2D3D> corr, const CameraIntrinsics& k,
                            const RansacConfig& cfg = {}) {
  cfg.validate();
  if (corr.size() < kMinimalSampleSize) {
    throw Error(Errc::InsufficientCorrespondences, "RANSAC PnP needs >= 4 correspondences");
  }
  const std::size_t n = corr.size();

  detail::Consensus best;
  RigidPose best_pose;
  int limit = cfg.max_iterations;
  int it = 0;
  for (; it < limit; ++it) {
    const auto idx = detail::draw_sample(cfg.rng_seed, static_cast<std::uint64_t>(it), n);
    std::array<Correspondence2D3D, kMinimalSampleSize> sample;
    for (std::size_t i = 0; i < idx.size(); ++i) sample[i] = corr[idx[i]];

    std::vector<RigidPose> candidates;
    try {
      candidates = solve_pnp_minimal(sample, k);
    } catch (const Error&) {
      continue;
    }
    for (const auto& pose : candidates) {
      const auto c = detail::score(pose, corr, k, cfg.reprojection_threshold);
      const bool better = c.count > best.count ||
                          (c.count == best.count && c.count > 0 && c.mean_error < best.mean_error);
      if (!better) continue;
      best = c;
      best_pose = pose;
      limit = detail::ransac_iteration_bound(static_cast<double>(best.count) / static_cast<double>(n),
                                             cfg.confidence, cfg.max_iterations);
    }
  }

  if (best.count < kMinimalSampleSize) {
    throw Error(Errc::ConsensusNotFound, "best consensus set has fewer than 4 inliers");
  }

  Correspondences consensus;
  consensus.reserve(best.count);
  for (const auto& c : corr) {
    if (reprojection_error(best_pose, c, k) < cfg.reprojection_threshold) consensus.push_back(c);
  }

  PnPResult result;
  result.pose = refine_pnp(best_pose, consensus, k);
  result.iterations_used = it;
  result.inlier_mask.assign(n, false);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = reprojection_error(result.pose, corr[i], k);
    if (e < cfg.reprojection_threshold) {
      result.inlier_mask[i] = true;
      sum += e;
      ++count;
    }
  }
  if (count < kMinimalSampleSize) {
    throw Error(Errc::ConsensusNotFound, "refined pose keeps fewer than 4 inliers");
  }
  result.mean_reprojection_error = sum / static_cast<double>(count);
  return result;
}

}  // namespace catpose
