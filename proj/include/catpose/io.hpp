#pragma once

/**
 * @file io.hpp
 * @brief JSON / JSON-lines readers and writers for the file formats used by
 * the command-line tool.
 *
 *  pose:            {"rotation": [9 row-major], "translation": [3]}
 *                   ("quaternion": [w,x,y,z] accepted instead of rotation)
 *  intrinsics:      {"fx", "fy", "cx", "cy"}
 *  correspondences: [{"image": [u,v], "model": [x,y,z]}, ...]
 *  category stats:  [{"category", "mean_scale", "std_dev", "count"}, ...]
 *  shape/model:     {"category", "points": [[x,y,z], ...]}
 *  deformation:     {"offsets": [[dx,dy,dz], ...]}
 *  matrix:          {"rows", "cols", "data": [row-major]} or
 *                   {"rows", "cols", "triplets": [[i,j,v], ...]}
 *  detections:      JSON-lines {"category", "confidence", "pose", "scale",
 *                   "canonical_extents", "image_id"?}; ground truth omits
 *                   confidence
 *  scale listing:   JSON-lines {"category", "scale"}
 */

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "catpose/error.hpp"
#include "catpose/eval.hpp"
#include "catpose/geometry.hpp"
#include "catpose/nocs.hpp"
#include "catpose/pnp.hpp"
#include "catpose/scale.hpp"

namespace catpose::io {

using Json = nlohmann::json;

namespace detail {

inline double number(const Json& j, const char* what) {
  if (!j.is_number()) throw Error(Errc::ParseError, std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw Error(Errc::ParseError, std::string(what) + " must be finite");
  return v;
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw Error(Errc::ParseError, "expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::ParseError, std::string("missing field '") + key + "'");
  return *it;
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
    throw Error(Errc::ParseError, std::string(what) + " must be an array of " + std::to_string(N));
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = number(j[static_cast<std::size_t>(i)], what);
  return v;
}

/// Prefixes a parse failure with its line number.
template <class F>
auto at_line(std::size_t line, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), "line " + std::to_string(line) + ": " + e.detail());
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, "line " + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace detail

inline Json parse(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ParseError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json load_json(const std::string& path) {
  try {
    return parse(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.detail());
  }
}

template <class T>
Json array_of(const T& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// --- poses ----------------------------------------------------------------

inline Json to_json(const Rotation& r) {
  Json a = Json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a.push_back(r.matrix()(i, j));
  return a;
}

inline Json to_json(const RigidPose& p) {
  return {{"rotation", to_json(p.rotation)}, {"translation", array_of(p.translation)}};
}

inline Json to_json(const SimilarityTransform& s) {
  return {{"scale", s.scale}, {"rotation", to_json(s.rotation)}, {"translation", array_of(s.translation)}};
}

/// Accepts rotations orthonormal within 1e-6 and projects them onto SO(3).
inline Rotation rotation_from_json(const Json& j) {
  if (j.contains("quaternion")) {
    const Eigen::Vector4d q = detail::vec<4>(j["quaternion"], "quaternion");
    return Rotation::from_quaternion({q(0), q(1), q(2), q(3)});
  }
  const Json& r = detail::field(j, "rotation");
  if (!r.is_array() || r.size() != 9) throw Error(Errc::ParseError, "rotation must be an array of 9");
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = detail::number(r[static_cast<std::size_t>(3 * i + k)], "rotation");
  if ((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(m.determinant() - 1.0) > 1e-6) {
    throw Error(Errc::ParseError, "rotation is not a proper orthonormal matrix");
  }
  return Rotation::nearest(m);
}

inline RigidPose pose_from_json(const Json& j) {
  return {rotation_from_json(j), detail::vec<3>(detail::field(j, "translation"), "translation")};
}

inline SimilarityTransform similarity_from_json(const Json& j) {
  SimilarityTransform s;
  s.scale = detail::number(detail::field(j, "scale"), "scale");
  if (!(s.scale > 0.0)) throw Error(Errc::ParseError, "scale must be positive");
  s.rotation = rotation_from_json(j);
  s.translation = detail::vec<3>(detail::field(j, "translation"), "translation");
  return s;
}

// --- camera / correspondences ----------------------------------------------

inline CameraIntrinsics intrinsics_from_json(const Json& j) {
  CameraIntrinsics k{detail::number(detail::field(j, "fx"), "fx"), detail::number(detail::field(j, "fy"), "fy"),
                     detail::number(detail::field(j, "cx"), "cx"), detail::number(detail::field(j, "cy"), "cy")};
  k.validate();
  return k;
}

inline Json to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

/// Image points of a correspondence file, with model points when present.
struct CorrespondenceFile {
  std::vector<Point2> image;
  std::vector<std::optional<Point3>> model;

  Correspondences complete() const {
    Correspondences out;
    for (std::size_t i = 0; i < image.size(); ++i) {
      if (!model[i]) throw Error(Errc::ParseError, "entry " + std::to_string(i) + " lacks 'model'");
      out.push_back({image[i], *model[i]});
    }
    return out;
  }
};

inline CorrespondenceFile correspondences_from_json(const Json& j) {
  if (!j.is_array()) throw Error(Errc::ParseError, "correspondences must be a JSON array");
  CorrespondenceFile out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      out.image.push_back(detail::vec<2>(detail::field(j[i], "image"), "image"));
      out.model.push_back(j[i].contains("model") ? std::optional<Point3>(detail::vec<3>(j[i]["model"], "model"))
                                                 : std::nullopt);
    } catch (const Error& e) {
      throw Error(Errc::ParseError, "entry " + std::to_string(i) + ": " + e.detail());
    }
  }
  return out;
}

inline Json to_json(const Correspondences& corr) {
  Json a = Json::array();
  for (const auto& c : corr) a.push_back({{"image", array_of(c.image)}, {"model", array_of(c.model)}});
  return a;
}

inline Json to_json(const PnPResult& r) {
  Json mask = Json::array();
  for (bool b : r.inlier_mask) mask.push_back(b);
  return {{"pose", to_json(r.pose)},
          {"inlier_count", r.inlier_count()},
          {"inlier_mask", mask},
          {"mean_reprojection_error", r.mean_reprojection_error},
          {"iterations_used", r.iterations_used}};
}

// --- scale statistics ------------------------------------------------------

inline Json to_json(const CategoryStats& s) {
  return {{"category", s.category}, {"mean_scale", s.mean_scale}, {"std_dev", s.std_dev}, {"count", s.count}};
}

inline std::vector<CategoryStats> stats_from_json(const Json& j) {
  if (!j.is_array()) throw Error(Errc::ParseError, "category stats must be a JSON array");
  std::vector<CategoryStats> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      const Json& e = j[i];
      const Json& cat = detail::field(e, "category");
      if (!cat.is_string()) throw Error(Errc::ParseError, "category must be a string");
      CategoryStats s;
      s.category = cat.get<std::string>();
      s.mean_scale = detail::number(detail::field(e, "mean_scale"), "mean_scale");
      s.std_dev = detail::number(detail::field(e, "std_dev"), "std_dev");
      const double count = detail::number(detail::field(e, "count"), "count");
      if (count < 1.0 || count != std::floor(count)) throw Error(Errc::ParseError, "count must be a positive integer");
      s.count = static_cast<std::size_t>(count);
      s.validate();
      out.push_back(std::move(s));
    } catch (const Error& e) {
      throw Error(e.code(), "entry " + std::to_string(i) + ": " + e.detail());
    }
  }
  return out;
}

inline Json to_json(const std::vector<CategoryStats>& stats) {
  Json a = Json::array();
  for (const auto& s : stats) a.push_back(to_json(s));
  return a;
}

struct ScaleSample {
  std::string category;
  double scale = 0.0;
};

/// JSON-lines of {category, scale}; blank lines skipped. Non-positive
/// scales are rejected with their line number.
inline std::vector<ScaleSample> scale_listing_from_jsonl(std::istream& in) {
  std::vector<ScaleSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    detail::at_line(lineno, [&] {
      const Json j = Json::parse(line);
      const Json& cat = detail::field(j, "category");
      if (!cat.is_string()) throw Error(Errc::ParseError, "category must be a string");
      const double s = detail::number(detail::field(j, "scale"), "scale");
      if (!(s > 0.0)) throw Error(Errc::NonPositiveScale, "scale must be positive");
      out.push_back({cat.get<std::string>(), s});
      return 0;
    });
  }
  return out;
}

// --- shapes ------------------------------------------------------------------

inline PointSet3 points_from_json(const Json& j, const char* what) {
  if (!j.is_array()) throw Error(Errc::ParseError, std::string(what) + " must be an array");
  PointSet3 pts;
  for (const auto& p : j) pts.push_back(detail::vec<3>(p, what));
  return pts;
}

inline Json to_json(const PointSet3& pts) {
  Json a = Json::array();
  for (const auto& p : pts) a.push_back(array_of(p));
  return a;
}

inline ShapePrior prior_from_json(const Json& j) {
  const Json& cat = detail::field(j, "category");
  if (!cat.is_string()) throw Error(Errc::ParseError, "category must be a string");
  return ShapePrior(cat.get<std::string>(), points_from_json(detail::field(j, "points"), "points"));
}

inline NocsModel model_from_json(const Json& j) {
  return NocsModel(points_from_json(detail::field(j, "points"), "points"));
}

inline Json model_to_json(const std::string& category, const PointSet3& pts) {
  return {{"category", category}, {"points", to_json(pts)}};
}

inline DeformationField deformation_from_json(const Json& j) {
  return {points_from_json(detail::field(j, "offsets"), "offsets")};
}

inline CorrespondenceMatrix matrix_from_json(const Json& j) {
  const double rows = detail::number(detail::field(j, "rows"), "rows");
  const double cols = detail::number(detail::field(j, "cols"), "cols");
  if (rows < 1 || cols < 1 || rows != std::floor(rows) || cols != std::floor(cols)) {
    throw Error(Errc::ParseError, "rows and cols must be positive integers");
  }
  const auto m = static_cast<Eigen::Index>(rows), n = static_cast<Eigen::Index>(cols);
  if (j.contains("data")) {
    std::vector<double> data;
    for (const auto& v : j["data"]) data.push_back(detail::number(v, "data"));
    return CorrespondenceMatrix::from_dense(m, n, data);
  }
  std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> trip;
  for (const auto& t : detail::field(j, "triplets")) {
    if (!t.is_array() || t.size() != 3) throw Error(Errc::ParseError, "triplet must be [i, j, v]");
    const double i = detail::number(t[0], "triplet row"), k = detail::number(t[1], "triplet col");
    if (i != std::floor(i) || k != std::floor(k)) throw Error(Errc::ParseError, "triplet indices must be integers");
    trip.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k), detail::number(t[2], "triplet value"));
  }
  return CorrespondenceMatrix::from_triplets(m, n, trip);
}

inline Json to_json(const CorrespondenceMatrix& c) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index k = 0; k < c.cols(); ++k) data.push_back(c.entries()(i, k));
  return {{"rows", c.rows()}, {"cols", c.cols()}, {"data", data}};
}

// --- detections ----------------------------------------------------------------

inline PoseEstimate estimate_from_json(const Json& j) {
  PoseEstimate e;
  e.pose = pose_from_json(detail::field(j, "pose"));
  e.scale = detail::number(detail::field(j, "scale"), "scale");
  if (!(e.scale > 0.0)) throw Error(Errc::ParseError, "scale must be positive");
  e.canonical_extents = detail::vec<3>(detail::field(j, "canonical_extents"), "canonical_extents");
  if (!(e.canonical_extents.array() > 0.0).all()) throw Error(Errc::ParseError, "canonical_extents must be positive");
  return e;
}

inline std::string image_id_from_json(const Json& j) {
  if (!j.contains("image_id")) return "";
  const Json& id = j["image_id"];
  if (id.is_string()) return id.get<std::string>();
  if (id.is_number_integer()) return std::to_string(id.get<long long>());
  throw Error(Errc::ParseError, "image_id must be a string or integer");
}

inline std::string category_from_json(const Json& j) {
  const Json& cat = detail::field(j, "category");
  if (!cat.is_string() || cat.get<std::string>().empty()) {
    throw Error(Errc::ParseError, "category must be a non-empty string");
  }
  return cat.get<std::string>();
}

inline std::vector<Detection> detections_from_jsonl(std::istream& in) {
  std::vector<Detection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(detail::at_line(lineno, [&] {
      const Json j = Json::parse(line);
      return Detection{image_id_from_json(j), category_from_json(j),
                       detail::number(detail::field(j, "confidence"), "confidence"), estimate_from_json(j)};
    }));
  }
  return out;
}

inline std::vector<GroundTruth> ground_truth_from_jsonl(std::istream& in) {
  std::vector<GroundTruth> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(detail::at_line(lineno, [&] {
      const Json j = Json::parse(line);
      return GroundTruth{image_id_from_json(j), category_from_json(j), estimate_from_json(j)};
    }));
  }
  return out;
}

inline Json to_json(const PoseEstimate& e) {
  return {{"pose", to_json(e.pose)}, {"scale", e.scale}, {"canonical_extents", array_of(e.canonical_extents)}};
}

inline Json to_json(const Detection& d) {
  Json j = to_json(d.estimate);
  j["category"] = d.category;
  j["confidence"] = d.confidence;
  if (!d.image_id.empty()) j["image_id"] = d.image_id;
  return j;
}

inline Json to_json(const GroundTruth& g) {
  Json j = to_json(g.estimate);
  j["category"] = g.category;
  if (!g.image_id.empty()) j["image_id"] = g.image_id;
  return j;
}

}  // namespace catpose::io
