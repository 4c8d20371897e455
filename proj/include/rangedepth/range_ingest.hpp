#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rangedepth/camera.hpp"
#include "rangedepth/errors.hpp"

namespace rangedepth {

/// A sparse range return, already expressed in the reference camera frame.
struct RangePoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const RangePoint&) const = default;
};

/// One GP training datum: viewing direction plus z-depth.
struct AngularMeasurement {
  AngularCoord angles;
  double depth = 0.0;

  bool operator==(const AngularMeasurement&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

}  // namespace detail

/// Parses CSV text with a header row naming at least the columns x, y, z.
/// Other columns are ignored. Row numbers in errors count data rows from 1.
inline std::vector<RangePoint> parse_range_csv(std::istream& in, const std::string& source = "<csv>") {
  std::string line;
  if (!std::getline(in, line)) throw InputError(source + ": missing header row");
  const auto header = detail::split_commas(line);
  int col[3] = {-1, -1, -1};
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "x") col[0] = static_cast<int>(i);
    if (header[i] == "y") col[1] = static_cast<int>(i);
    if (header[i] == "z") col[2] = static_cast<int>(i);
  }
  for (int c = 0; c < 3; ++c)
    if (col[c] < 0) throw InputError(source + ": header lacks column '" + std::string(1, "xyz"[c]) + "'");

  std::vector<RangePoint> points;
  long long row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_commas(line);
    double xyz[3];
    for (int c = 0; c < 3; ++c) {
      const auto idx = static_cast<std::size_t>(col[c]);
      if (idx >= cells.size())
        throw InputError(source + ": row " + std::to_string(row) + ": missing column '" + "xyz"[c] + "'");
      const auto cell = cells[idx];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), xyz[c]);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw InputError(source + ": row " + std::to_string(row) + ": non-numeric value '" + std::string(cell) + "'");
      if (!std::isfinite(xyz[c]))
        throw InputError(source + ": row " + std::to_string(row) + ": non-finite value");
    }
    points.push_back({xyz[0], xyz[1], xyz[2]});
  }
  return points;
}

inline std::vector<RangePoint> load_range_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open range file " + path);
  return parse_range_csv(in, path);
}

/// Writes with 17 significant digits so a reload reproduces every double exactly.
inline void save_range_csv(const std::string& path, const std::vector<RangePoint>& points) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "x,y,z\n";
  char buf[128];
  for (const auto& p : points) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.x, p.y, p.z);
    out.write(buf, n);
  }
}

/// Applies a sensor-to-camera extrinsic to every point.
inline std::vector<RangePoint> transform_range_points(const std::vector<RangePoint>& points,
                                                      const PoseSE3& sensor_to_camera) {
  std::vector<RangePoint> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const Eigen::Vector3d q = sensor_to_camera.apply({p.x, p.y, p.z});
    out.push_back({q.x(), q.y(), q.z()});
  }
  return out;
}

struct IngestResult {
  std::vector<AngularMeasurement> measurements;
  std::size_t culled = 0;
};

/// Maps each forward point to (angles, z-depth); points with z <= 0 are culled.
inline IngestResult to_angular_measurements(const std::vector<RangePoint>& points) {
  IngestResult result;
  result.measurements.reserve(points.size());
  for (const auto& p : points) {
    if (!(p.z > 0.0)) {
      ++result.culled;
      continue;
    }
    const auto ad = point_to_angles_depth({p.x, p.y, p.z});
    result.measurements.push_back({ad.angles, ad.depth});
  }
  return result;
}

/// Fraction of image pixels covered by measurements, in percent.
inline double coverage_percent(std::size_t n_measurements, const Intrinsics& intr) {
  return 100.0 * static_cast<double>(n_measurements) / static_cast<double>(intr.pixel_count());
}

}  // namespace rangedepth
