#pragma once

// Analytic test scenes: depth is known in closed form for every direction,
// so reconstructions can be scored exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include "rangedepth/camera.hpp"
#include "rangedepth/errors.hpp"
#include "rangedepth/gp_core.hpp"
#include "rangedepth/grid.hpp"
#include "rangedepth/local_gp.hpp"
#include "rangedepth/random.hpp"
#include "rangedepth/range_ingest.hpp"

namespace rangedepth {

enum class SceneKind { fronto_plane, slanted_plane, two_plane_step };

struct SceneSpec {
  SceneKind kind = SceneKind::fronto_plane;
  double plane_depth = 10.0;                           // fronto_plane
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();   // slanted_plane: n . p = offset
  double offset = 10.0;
  double near_depth = 5.0;                             // two_plane_step
  double far_depth = 15.0;
  double step_azimuth = 0.0;
  double noise_std = 0.0;
  std::size_t n_samples = 500;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_samples < 1) throw InputError("scene: n_samples must be at least 1");
    if (!(noise_std >= 0.0)) throw InputError("scene: noise_std must be non-negative");
    switch (kind) {
      case SceneKind::fronto_plane:
        if (!(plane_depth > 0.0)) throw InputError("scene: plane depth must be positive");
        break;
      case SceneKind::slanted_plane:
        if (!(offset > 0.0) || !(normal.norm() > 0.0)) throw InputError("scene: slanted plane needs offset > 0 and a non-zero normal");
        break;
      case SceneKind::two_plane_step:
        if (!(near_depth > 0.0) || !(far_depth > 0.0)) throw InputError("scene: step depths must be positive");
        break;
    }
  }
};

inline SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "fronto_plane") return SceneKind::fronto_plane;
  if (s == "slanted_plane") return SceneKind::slanted_plane;
  if (s == "two_plane_step") return SceneKind::two_plane_step;
  throw InputError("unknown scene kind '" + s + "'");
}

/// z-depth of the scene surface along direction `a`.
inline double analytic_depth(const SceneSpec& spec, const AngularCoord& a) {
  switch (spec.kind) {
    case SceneKind::fronto_plane:
      return spec.plane_depth;
    case SceneKind::slanted_plane: {
      const double nr = spec.normal.dot(angles_to_ray(a));
      if (!(nr > 0.0)) throw InputError("analytic_depth: direction does not meet the slanted plane");
      return spec.offset / nr;
    }
    case SceneKind::two_plane_step:
      return a.azimuth < spec.step_azimuth ? spec.near_depth : spec.far_depth;
  }
  return 0.0;
}

/// Bounding box, in angle space, of the four image-corner directions.
struct AngularBox {
  double azimuth_min = 0.0;
  double azimuth_max = 0.0;
  double elevation_min = 0.0;
  double elevation_max = 0.0;

  [[nodiscard]] bool contains(const AngularCoord& a) const {
    return a.azimuth >= azimuth_min && a.azimuth <= azimuth_max && a.elevation >= elevation_min &&
           a.elevation <= elevation_max;
  }
  [[nodiscard]] double diameter() const {
    return std::hypot(azimuth_max - azimuth_min, elevation_max - elevation_min);
  }
};

inline AngularBox angular_footprint(const Intrinsics& intr) {
  const double us[2] = {0.0, static_cast<double>(intr.width - 1)};
  const double vs[2] = {0.0, static_cast<double>(intr.height - 1)};
  AngularBox box{1e300, -1e300, 1e300, -1e300};
  for (double u : us) {
    for (double v : vs) {
      const auto a = pixel_to_angles(intr, u, v);
      box.azimuth_min = std::min(box.azimuth_min, a.azimuth);
      box.azimuth_max = std::max(box.azimuth_max, a.azimuth);
      box.elevation_min = std::min(box.elevation_min, a.elevation);
      box.elevation_max = std::max(box.elevation_max, a.elevation);
    }
  }
  return box;
}

/// Sample count for a given pixel-coverage fraction, e.g. 0.0002 for 0.02%.
inline std::size_t samples_for_coverage(double fraction, const Intrinsics& intr) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(intr.pixel_count())));
}

struct SyntheticScene {
  std::vector<AngularMeasurement> measurements;
  DepthField gt;
};

inline DepthField analytic_depth_field(const SceneSpec& spec, const Intrinsics& intr) {
  DepthField gt(intr.width, intr.height);
  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u) gt.set(u, v, analytic_depth(spec, pixel_to_angles(intr, u, v)), 0.0);
  return gt;
}

/// Directions uniform over the angular footprint; depths are the analytic
/// surface plus Gaussian noise of `noise_std`.
inline SyntheticScene sample_scene(const SceneSpec& spec, const Intrinsics& intr) {
  spec.validate();
  intr.validate();
  const AngularBox box = angular_footprint(intr);
  CounterRng rng(spec.seed);
  SyntheticScene scene;
  scene.measurements.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    AngularCoord a{rng.uniform(box.azimuth_min, box.azimuth_max), rng.uniform(box.elevation_min, box.elevation_max)};
    double z = analytic_depth(spec, a);
    if (spec.noise_std > 0.0) z += spec.noise_std * rng.normal();
    scene.measurements.push_back({a, z});
  }
  scene.gt = analytic_depth_field(spec, intr);
  return scene;
}

/// Camera-frame points for a list of measurements: the angle ray scaled to
/// the measured z-depth.
inline std::vector<RangePoint> measurements_to_points(std::span<const AngularMeasurement> measurements) {
  std::vector<RangePoint> pts;
  pts.reserve(measurements.size());
  for (const auto& m : measurements) {
    const Eigen::Vector3d p = angles_to_ray(m.angles) * m.depth;
    pts.push_back({p.x(), p.y(), p.z()});
  }
  return pts;
}

/// One draw of z ~ N(0, K + sn2 I) at `inputs`, using the library kernel.
inline std::vector<double> sample_gp_prior(std::span<const AngularCoord> inputs, const KernelParams& params,
                                           std::uint64_t seed) {
  Eigen::MatrixXd k = gram_matrix(inputs, params);
  k.diagonal().array() += params.noise_variance + kJitterStart * params.signal_variance;
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("sample_gp_prior: covariance is not positive definite");
  CounterRng rng(seed, 0x9a11ULL);
  Eigen::VectorXd w(static_cast<Eigen::Index>(inputs.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
  const Eigen::VectorXd z = llt.matrixL() * w;
  return {z.data(), z.data() + z.size()};
}

/// Deterministic value-noise texture for rendering tests: bilinearly
/// interpolated random lattice values at two scales.
inline RgbImage procedural_image(int width, int height, std::uint64_t seed) {
  RgbImage img(width, height);
  const CounterRng rng(seed, 0x7e47ULL);
  auto lattice = [&](long long i, long long j, int channel, int octave) {
    const auto key = static_cast<std::uint64_t>((i * 73856093LL) ^ (j * 19349663LL) ^ (channel * 83492791LL) ^ (octave * 2654435761LL));
    return static_cast<double>(rng.bits_at(key) >> 11) * 0x1.0p-53;
  };
  auto noise = [&](double x, double y, int channel, int octave) {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const double tx = x - fx;
    const double ty = y - fy;
    const auto i = static_cast<long long>(fx);
    const auto j = static_cast<long long>(fy);
    const double a = lattice(i, j, channel, octave) * (1 - tx) + lattice(i + 1, j, channel, octave) * tx;
    const double b = lattice(i, j + 1, channel, octave) * (1 - tx) + lattice(i + 1, j + 1, channel, octave) * tx;
    return a * (1 - ty) + b * ty;
  };
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u)
      for (int c = 0; c < 3; ++c)
        img(u, v)[static_cast<std::size_t>(c)] = 0.6 * noise(u / 6.0, v / 6.0, c, 0) + 0.4 * noise(u / 2.0, v / 2.0, c, 1);
  return img;
}

/// Pure lateral camera motion: frame k sees the scene from k * step metres
/// to the right of the reference camera.
inline std::vector<PoseSE3> lateral_trajectory(std::size_t n_poses, double step) {
  std::vector<PoseSE3> poses(n_poses);
  for (std::size_t k = 0; k < n_poses; ++k) poses[k].translation = Eigen::Vector3d(-step * static_cast<double>(k), 0.0, 0.0);
  return poses;
}

}  // namespace rangedepth
