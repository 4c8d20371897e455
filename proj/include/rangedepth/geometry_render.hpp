#pragma once

// Depth + image -> coloured point cloud -> target pose -> pinhole projection
// -> nearest-wins point splat, one pixel per point.

#include <cmath>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "rangedepth/camera.hpp"
#include "rangedepth/errors.hpp"
#include "rangedepth/grid.hpp"
#include "rangedepth/local_gp.hpp"

namespace rangedepth {

struct ColoredPointCloud {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Rgb> colors;

  [[nodiscard]] std::size_t size() const { return positions.size(); }
  [[nodiscard]] bool empty() const { return positions.empty(); }

  void push_back(const Eigen::Vector3d& p, const Rgb& c) {
    positions.push_back(p);
    colors.push_back(c);
  }
};

/// A conditioning frame. Unfilled pixels are black with zbuffer = +inf.
struct RenderedFrame {
  RgbImage color;
  Grid<std::uint8_t> filled;
  Grid<double> zbuffer;

  RenderedFrame() = default;
  RenderedFrame(int width, int height)
      : color(width, height, Rgb{0.0, 0.0, 0.0}),
        filled(width, height, 0),
        zbuffer(width, height, std::numeric_limits<double>::infinity()) {}

  bool operator==(const RenderedFrame&) const = default;
};

/// One point per valid pixel: Z * ((u - cx)/fx, (v - cy)/fy, 1), coloured by the image.
inline ColoredPointCloud backproject(const DepthField& field, const RgbImage& image, const Intrinsics& intr) {
  if (field.width() != intr.width || field.height() != intr.height)
    throw InputError("backproject: depth field does not match the intrinsics");
  if (image.width != intr.width || image.height != intr.height)
    throw InputError("backproject: image does not match the intrinsics");
  ColoredPointCloud cloud;
  cloud.positions.reserve(field.valid_count());
  cloud.colors.reserve(field.valid_count());
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      if (!field.is_valid(u, v)) continue;
      const double z = field.mean(u, v);
      cloud.push_back({z * ((u - intr.cx) / intr.fx), z * ((v - intr.cy) / intr.fy), z}, image(u, v));
    }
  }
  return cloud;
}

inline ColoredPointCloud transform_points(const ColoredPointCloud& cloud, const PoseSE3& pose) {
  ColoredPointCloud out;
  out.colors = cloud.colors;
  out.positions.reserve(cloud.size());
  for (const auto& p : cloud.positions) out.positions.push_back(pose.apply(p));
  return out;
}

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  bool in_front = false;
};

inline Projection project_point(const Eigen::Vector3d& p, const Intrinsics& intr) {
  if (!(p.z() > 0.0)) return {0.0, 0.0, p.z(), false};
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy, p.z(), true};
}

inline std::vector<Projection> project(std::span<const Eigen::Vector3d> points, const Intrinsics& intr) {
  std::vector<Projection> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(project_point(p, intr));
  return out;
}

/// Splats every in-front point into the pixel nearest its projection
/// (round half away from zero). A point wins a pixel only with a strictly
/// smaller z, so equal depths keep the earlier point.
inline RenderedFrame splat(const ColoredPointCloud& cloud, const PoseSE3& pose, const Intrinsics& intr) {
  RenderedFrame frame(intr.width, intr.height);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto proj = project_point(pose.apply(cloud.positions[i]), intr);
    if (!proj.in_front || !std::isfinite(proj.u) || !std::isfinite(proj.v)) continue;
    const double ru = std::round(proj.u);
    const double rv = std::round(proj.v);
    if (ru < 0.0 || rv < 0.0 || ru > intr.width - 1 || rv > intr.height - 1) continue;
    const int u = static_cast<int>(ru);
    const int v = static_cast<int>(rv);
    if (proj.z < frame.zbuffer(u, v)) {
      frame.zbuffer(u, v) = proj.z;
      frame.color(u, v) = cloud.colors[i];
      frame.filled(u, v) = 1;
    }
  }
  return frame;
}

/// Frame t is splat(cloud, poses[t], intr). Poses are rendered on up to
/// `workers` threads (0 = hardware concurrency).
inline std::vector<RenderedFrame> render_trajectory(const ColoredPointCloud& cloud, std::span<const PoseSE3> poses,
                                                    const Intrinsics& intr, unsigned workers = 1) {
  if (poses.empty()) throw InputError("render_trajectory: empty trajectory");
  std::vector<RenderedFrame> frames(poses.size());
  if (workers == 0) workers = default_workers();
  workers = std::min<unsigned>(workers, static_cast<unsigned>(poses.size()));
  if (workers <= 1) {
    for (std::size_t t = 0; t < poses.size(); ++t) frames[t] = splat(cloud, poses[t], intr);
    return frames;
  }
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t t = w; t < poses.size(); t += workers) frames[t] = splat(cloud, poses[t], intr);
    });
  }
  for (auto& th : threads) th.join();
  return frames;
}

}  // namespace rangedepth
