#pragma once

// Per-pixel localized GP depth reconstruction.
//
// Each pixel direction a* is regressed from the measurements inside the
// closed angular ball |a_t - a*| <= r only. Neighbourhoods are found through
// a uniform grid over (azimuth, elevation) with cell size r, so a lookup
// touches the 3x3 block of cells around a*.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rangedepth/camera.hpp"
#include "rangedepth/errors.hpp"
#include "rangedepth/gp_core.hpp"
#include "rangedepth/grid.hpp"
#include "rangedepth/random.hpp"
#include "rangedepth/range_ingest.hpp"

namespace rangedepth {

inline constexpr double kInvalidDepth = -1.0;

/// Dense posterior grids. Invalid pixels hold kInvalidDepth in both mean and
/// variance; valid pixels have mean > 0 and variance >= 0.
struct DepthField {
  Grid<double> mean;
  Grid<double> variance;
  Grid<std::uint8_t> valid;

  DepthField() = default;
  DepthField(int width, int height)
      : mean(width, height, kInvalidDepth), variance(width, height, kInvalidDepth), valid(width, height, 0) {}

  [[nodiscard]] int width() const { return mean.width; }
  [[nodiscard]] int height() const { return mean.height; }
  [[nodiscard]] bool is_valid(int u, int v) const { return valid(u, v) != 0; }

  void set(int u, int v, double m, double var) {
    mean(u, v) = m;
    variance(u, v) = var;
    valid(u, v) = 1;
  }
  void invalidate(int u, int v) {
    mean(u, v) = kInvalidDepth;
    variance(u, v) = kInvalidDepth;
    valid(u, v) = 0;
  }

  [[nodiscard]] std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.data.begin(), valid.data.end(), std::uint8_t{1}));
  }

  bool operator==(const DepthField&) const = default;
};

// ---------------------------------------------------------------------------
// Spatial index

class AngularIndex {
 public:
  AngularIndex(std::span<const AngularMeasurement> measurements, double cell_size) : cell_size_(cell_size) {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw InputError("angular index: cell size must be positive");
    for (std::size_t i = 0; i < measurements.size(); ++i) cells_[key_of(measurements[i].angles)].push_back(i);
  }

  [[nodiscard]] double cell_size() const { return cell_size_; }
  [[nodiscard]] std::size_t cell_count() const { return cells_.size(); }

  struct CellId {
    long long azimuth = 0;
    long long elevation = 0;
    bool operator==(const CellId&) const = default;
  };

  [[nodiscard]] CellId cell_of(const AngularCoord& a) const {
    return {static_cast<long long>(std::floor(a.azimuth / cell_size_)),
            static_cast<long long>(std::floor(a.elevation / cell_size_))};
  }

  /// Indices stored in a cell, in insertion order; empty when the cell is absent.
  [[nodiscard]] std::span<const std::size_t> cell(CellId id) const {
    const auto it = cells_.find(pack(id));
    if (it == cells_.end()) return {};
    return it->second;
  }

 private:
  static std::uint64_t pack(CellId id) {
    return (static_cast<std::uint64_t>(id.azimuth) << 32) ^ (static_cast<std::uint64_t>(id.elevation) & 0xffffffffULL);
  }
  [[nodiscard]] std::uint64_t key_of(const AngularCoord& a) const { return pack(cell_of(a)); }

  double cell_size_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

inline AngularIndex build_index(std::span<const AngularMeasurement> measurements, double radius) {
  return AngularIndex(measurements, radius);
}

/// Indices of all measurements with |a_t - query| <= radius, ordered by
/// ascending distance, ties by index. `radius` may not exceed the index's
/// cell size.
inline std::vector<std::size_t> radius_query(const AngularIndex& index, std::span<const AngularMeasurement> measurements,
                                             const AngularCoord& query, double radius) {
  if (radius > index.cell_size()) throw InputError("radius_query: radius exceeds the index cell size");
  const double r2 = radius * radius;
  std::vector<std::pair<double, std::size_t>> hits;
  const auto centre = index.cell_of(query);
  for (long long da = -1; da <= 1; ++da) {
    for (long long de = -1; de <= 1; ++de) {
      for (std::size_t i : index.cell({centre.azimuth + da, centre.elevation + de})) {
        const double d2 = angular_distance_sq(measurements[i].angles, query);
        if (d2 <= r2) hits.emplace_back(d2, i);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<std::size_t> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.second);
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

enum class MeanMode { zero, local_mean };

inline constexpr std::size_t kUncapped = std::numeric_limits<std::size_t>::max();

struct LocalGPConfig {
  double radius = 0.3;
  std::size_t min_points = 3;
  std::size_t max_points = 64;
  MeanMode mean_mode = MeanMode::zero;
  KernelParams kernel;

  void validate() const {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InputError("local GP: radius must be positive");
    if (min_points < 1) throw InputError("local GP: min_points must be at least 1");
    if (max_points < min_points) throw InputError("local GP: max_points must be >= min_points");
    kernel.validate();
  }
};

inline std::string to_string(MeanMode m) { return m == MeanMode::zero ? "zero" : "local_mean"; }

inline MeanMode mean_mode_from_string(const std::string& s) {
  if (s == "zero") return MeanMode::zero;
  if (s == "local_mean") return MeanMode::local_mean;
  throw InputError("unknown mean_mode '" + s + "' (expected zero or local_mean)");
}

inline nlohmann::json to_json(const LocalGPConfig& c) {
  return {{"radius", c.radius},
          {"min_points", c.min_points},
          {"max_points", c.max_points == kUncapped ? nlohmann::json(nullptr) : nlohmann::json(c.max_points)},
          {"mean_mode", to_string(c.mean_mode)},
          {"kernel", to_json(c.kernel)}};
}

/// Overlays the keys present in `j` onto `base`. "max_points": null means uncapped.
inline LocalGPConfig local_config_from_json(const nlohmann::json& j, LocalGPConfig base = {}) {
  try {
    if (j.contains("radius")) base.radius = j.at("radius").get<double>();
    if (j.contains("min_points")) base.min_points = j.at("min_points").get<std::size_t>();
    if (j.contains("max_points"))
      base.max_points = j.at("max_points").is_null() ? kUncapped : j.at("max_points").get<std::size_t>();
    if (j.contains("mean_mode")) base.mean_mode = mean_mode_from_string(j.at("mean_mode").get<std::string>());
    if (j.contains("kernel")) base.kernel = kernel_params_from_json(j.at("kernel"), base.kernel);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("local GP config: ") + e.what());
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Reconstruction

namespace detail {

// Regression state for one neighbourhood, reused while consecutive pixels
// see the same measurement set.
class NeighbourhoodCache {
 public:
  NeighbourhoodCache(std::span<const AngularMeasurement> measurements, const LocalGPConfig& cfg)
      : measurements_(measurements), cfg_(cfg) {}

  GPPosterior predict(const std::vector<std::size_t>& members, const AngularCoord& query) {
    if (!gp_ || members != key_) refit(members);
    auto post = gp_->predict(query);
    post.mean += offset_;
    return post;
  }

 private:
  void refit(const std::vector<std::size_t>& members) {
    key_ = members;
    inputs_.clear();
    targets_.clear();
    for (std::size_t i : members) {
      inputs_.push_back(measurements_[i].angles);
      targets_.push_back(measurements_[i].depth);
    }
    offset_ = 0.0;
    if (cfg_.mean_mode == MeanMode::local_mean) {
      for (double z : targets_) offset_ += z;
      offset_ /= static_cast<double>(targets_.size());
      for (double& z : targets_) z -= offset_;
    }
    gp_.emplace(inputs_, targets_, cfg_.kernel);
  }

  std::span<const AngularMeasurement> measurements_;
  const LocalGPConfig& cfg_;
  std::vector<std::size_t> key_;
  std::vector<AngularCoord> inputs_;
  std::vector<double> targets_;
  double offset_ = 0.0;
  std::optional<GaussianProcess> gp_;
};

}  // namespace detail

/// Number of worker threads to use when the caller passes 0.
inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Dense depth and variance at every pixel centre.
///
/// A pixel is invalid when fewer than `min_points` measurements lie within
/// `radius` of its direction, or when the posterior mean is not positive.
/// Neighbourhoods larger than `max_points` keep the nearest ones; the kept
/// set is regressed in ascending index order so the result is a function of
/// the set alone. Rows are split across `workers` threads (0 = hardware
/// concurrency); output does not depend on the split.
inline DepthField reconstruct_depth(std::span<const AngularMeasurement> measurements, const Intrinsics& intr,
                                    const LocalGPConfig& cfg, unsigned workers = 1) {
  intr.validate();
  cfg.validate();
  if (measurements.empty()) throw InputError("reconstruct_depth: no measurements");

  const AngularIndex index = build_index(measurements, cfg.radius);
  DepthField field(intr.width, intr.height);

  auto process_rows = [&](int row_begin, int row_end) {
    detail::NeighbourhoodCache cache(measurements, cfg);
    for (int v = row_begin; v < row_end; ++v) {
      for (int u = 0; u < intr.width; ++u) {
        const AngularCoord a = pixel_to_angles(intr, u, v);
        auto members = radius_query(index, measurements, a, cfg.radius);
        if (members.size() < cfg.min_points) continue;
        if (members.size() > cfg.max_points) members.resize(cfg.max_points);
        std::sort(members.begin(), members.end());
        const auto post = cache.predict(members, a);
        if (post.mean > 0.0 && std::isfinite(post.mean)) field.set(u, v, post.mean, post.variance);
      }
    }
  };

  if (workers == 0) workers = default_workers();
  workers = std::min<unsigned>(workers, static_cast<unsigned>(intr.height));
  if (workers <= 1) {
    process_rows(0, intr.height);
    return field;
  }

  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const int begin = static_cast<int>(static_cast<long long>(intr.height) * w / workers);
    const int end = static_cast<int>(static_cast<long long>(intr.height) * (w + 1) / workers);
    threads.emplace_back([&, w, begin, end] {
      try {
        process_rows(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return field;
}

/// Either an absolute variance in m^2 or a fraction of sf2.
struct VarianceThreshold {
  double value = 0.25;
  bool relative = true;

  [[nodiscard]] double absolute(double signal_variance) const {
    return relative ? value * signal_variance : value;
  }
};

/// Invalidates every valid pixel whose variance exceeds `threshold` (m^2).
inline DepthField apply_variance_mask(const DepthField& field, double threshold) {
  if (!(threshold > 0.0)) throw InputError("variance mask: threshold must be positive");
  DepthField out = field;
  for (int v = 0; v < out.height(); ++v)
    for (int u = 0; u < out.width(); ++u)
      if (out.is_valid(u, v) && out.variance(u, v) > threshold) out.invalidate(u, v);
  return out;
}

// ---------------------------------------------------------------------------
// Scene-level kernel selection

struct SceneKernelOptions {
  std::optional<double> signal_variance;  // default: (max observed depth)^2
  double noise_variance = 0.01;
  LengthScaleSearch search;
  std::size_t max_subsample = 500;
  std::uint64_t seed = 0;
};

struct SceneKernelFit {
  KernelParams kernel;
  LengthScaleFit fit;
  std::size_t n_used = 0;
};

/// Fits l once for a whole scene on a uniform random subsample of at most
/// `max_subsample` measurements, using the zero-mean model.
inline SceneKernelFit fit_scene_kernel(std::span<const AngularMeasurement> measurements,
                                       const SceneKernelOptions& opts = {}) {
  if (measurements.empty()) throw InputError("fit_scene_kernel: no measurements");

  std::vector<std::size_t> chosen(measurements.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (chosen.size() > opts.max_subsample) {
    CounterRng rng(opts.seed, 0x5eedf17ULL);
    for (std::size_t i = 0; i < opts.max_subsample; ++i)
      std::swap(chosen[i], chosen[i + rng.below(chosen.size() - i)]);
    chosen.resize(opts.max_subsample);
    std::sort(chosen.begin(), chosen.end());
  }

  std::vector<AngularCoord> inputs;
  std::vector<double> targets;
  for (std::size_t i : chosen) {
    inputs.push_back(measurements[i].angles);
    targets.push_back(measurements[i].depth);
  }

  KernelParams params;
  double max_depth = 0.0;
  for (const auto& m : measurements) max_depth = std::max(max_depth, m.depth);
  params.signal_variance = opts.signal_variance.value_or(max_depth * max_depth);
  params.noise_variance = opts.noise_variance;

  SceneKernelFit out;
  out.fit = fit_length_scale(inputs, targets, params, opts.search);
  params.length_scale = out.fit.length_scale;
  out.kernel = params;
  out.n_used = chosen.size();
  return out;
}

/// Neighbourhood radius used when none is configured.
inline double default_radius(const KernelParams& kernel) { return 3.0 * kernel.length_scale; }

}  // namespace rangedepth
