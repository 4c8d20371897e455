#pragma once

// Pinhole intrinsics, rigid poses, and the pixel <-> ray <-> angle mappings.
//
// Conventions used throughout the library:
//   * pixel centres sit on integer coordinates, u = 0..width-1, v = 0..height-1
//   * "depth" is the camera-frame z coordinate, never Euclidean range
//   * a pose maps reference-camera coordinates into a target camera frame

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <json.hpp>

#include "rangedepth/errors.hpp"

namespace rangedepth {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws InputError unless fx, fy > 0 and the principal point lies inside the image.
  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("intrinsics: fx and fy must be positive");
    if (width <= 0 || height <= 0) throw InputError("intrinsics: width and height must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw InputError("intrinsics: principal point must lie inside the image");
  }

  [[nodiscard]] long long pixel_count() const {
    return static_cast<long long>(width) * static_cast<long long>(height);
  }

  bool operator==(const Intrinsics&) const = default;
};

struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }

  [[nodiscard]] Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  /// Orthonormality and det = +1, both within `tol`.
  void validate(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite())
      throw InputError("pose: non-finite entries");
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > tol) throw InputError("pose: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > tol)
      throw InputError("pose: rotation determinant is not +1");
  }
};

/// Azimuth phi and elevation theta of a camera ray, radians.
struct AngularCoord {
  double azimuth = 0.0;
  double elevation = 0.0;

  bool operator==(const AngularCoord&) const = default;
};

inline double angular_distance_sq(const AngularCoord& a, const AngularCoord& b) {
  const double dp = a.azimuth - b.azimuth;
  const double dt = a.elevation - b.elevation;
  return dp * dp + dt * dt;
}

inline Eigen::Vector3d pixel_ray(const Intrinsics& intr, double u, double v) {
  return {(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
}

inline AngularCoord ray_to_angles(const Eigen::Vector3d& ray) {
  if (!(ray.z() > 0.0)) throw InputError("ray_to_angles: ray does not point forward (r_z <= 0)");
  const double azimuth = std::atan(ray.x() / ray.z());
  const double elevation = std::atan(ray.y() / std::sqrt(ray.x() * ray.x() + ray.z() * ray.z()));
  return {azimuth, elevation};
}

inline AngularCoord pixel_to_angles(const Intrinsics& intr, double u, double v) {
  return ray_to_angles(pixel_ray(intr, u, v));
}

/// Inverse of ray_to_angles, normalised so that r_z = 1.
inline Eigen::Vector3d angles_to_ray(const AngularCoord& a) {
  const double rx = std::tan(a.azimuth);
  const double ry = std::tan(a.elevation) * std::sqrt(rx * rx + 1.0);
  return {rx, ry, 1.0};
}

struct AnglesAndDepth {
  AngularCoord angles;
  double depth = 0.0;
};

/// Throws InputError for points with p_z <= 0; callers that want culling
/// check the sign first.
inline AnglesAndDepth point_to_angles_depth(const Eigen::Vector3d& p) {
  if (!(p.z() > 0.0)) throw InputError("point_to_angles_depth: point is behind the camera");
  return {ray_to_angles(Eigen::Vector3d(p.x() / p.z(), p.y() / p.z(), 1.0)), p.z()};
}

// ---------------------------------------------------------------------------
// JSON

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
  Intrinsics intr;
  try {
    intr.fx = j.at("fx").get<double>();
    intr.fy = j.at("fy").get<double>();
    intr.cx = j.at("cx").get<double>();
    intr.cy = j.at("cy").get<double>();
    intr.width = j.at("width").get<int>();
    intr.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("intrinsics: ") + e.what());
  }
  intr.validate();
  return intr;
}

inline nlohmann::json to_json(const Intrinsics& intr) {
  return {{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
          {"cy", intr.cy}, {"width", intr.width}, {"height", intr.height}};
}

inline PoseSE3 pose_from_json(const nlohmann::json& j) {
  PoseSE3 pose;
  try {
    const auto& r = j.at("R");
    const auto& t = j.at("t");
    if (!r.is_array() || r.size() != 9) throw InputError("pose: \"R\" must hold 9 numbers");
    if (!t.is_array() || t.size() != 3) throw InputError("pose: \"t\" must hold 3 numbers");
    for (int i = 0; i < 9; ++i) pose.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)].get<double>();
    for (int i = 0; i < 3; ++i) pose.translation(i) = t[static_cast<std::size_t>(i)].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("pose: ") + e.what());
  }
  pose.validate();
  return pose;
}

inline nlohmann::json to_json(const PoseSE3& pose) {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 9; ++i) r.push_back(pose.rotation(i / 3, i % 3));
  return {{"R", r},
          {"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline Intrinsics load_intrinsics(const std::string& path) {
  return intrinsics_from_json(read_json_file(path));
}

/// A trajectory file is a JSON array of {"R": [...9], "t": [...3]} poses.
inline std::vector<PoseSE3> load_trajectory(const std::string& path) {
  const auto j = read_json_file(path);
  if (!j.is_array()) throw InputError(path + ": trajectory must be a JSON array");
  std::vector<PoseSE3> poses;
  poses.reserve(j.size());
  for (const auto& p : j) poses.push_back(pose_from_json(p));
  return poses;
}

}  // namespace rangedepth
