#pragma once

// End-to-end commands behind the `rangedepth` CLI. Each command reads its
// inputs from files, writes its outputs into a directory, and returns a
// JSON summary. Identical inputs and options give byte-identical files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "rangedepth/camera.hpp"
#include "rangedepth/errors.hpp"
#include "rangedepth/geometry_render.hpp"
#include "rangedepth/gp_core.hpp"
#include "rangedepth/image_io.hpp"
#include "rangedepth/local_gp.hpp"
#include "rangedepth/metrics.hpp"
#include "rangedepth/range_ingest.hpp"
#include "rangedepth/synth.hpp"

namespace rangedepth {

namespace fs = std::filesystem;

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError("missing " + what + " path");
  if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path);
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + dir);
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(2) << '\n';
}

/// +inf and NaN have no JSON spelling; they are emitted as null.
inline nlohmann::json json_number(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline std::string frame_name(const char* pattern, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, static_cast<unsigned>(index));
  return buf;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SceneSpec scene;
  std::optional<double> coverage;  // fraction of pixels; overrides scene.n_samples
  Intrinsics intrinsics{500.0, 500.0, 319.5, 239.5, 640, 480};
  std::size_t n_poses = 1;
  double pose_step = 0.0;
  std::string out_dir;
};

/// Writes measurements.csv, gt.pfm, intrinsics.json, image.png, trajectory.json.
inline nlohmann::json cmd_synth(SynthOptions opts) {
  opts.intrinsics.validate();
  if (opts.coverage) opts.scene.n_samples = samples_for_coverage(*opts.coverage, opts.intrinsics);
  const auto scene = sample_scene(opts.scene, opts.intrinsics);
  ensure_dir(opts.out_dir);
  const fs::path dir(opts.out_dir);
  save_range_csv((dir / "measurements.csv").string(), measurements_to_points(scene.measurements));
  write_pfm((dir / "gt.pfm").string(), to_pfm(scene.gt.mean));
  write_json_file((dir / "intrinsics.json").string(), to_json(opts.intrinsics));
  write_png((dir / "image.png").string(),
            procedural_image(opts.intrinsics.width, opts.intrinsics.height, opts.scene.seed));
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& p : lateral_trajectory(std::max<std::size_t>(opts.n_poses, 1), opts.pose_step)) traj.push_back(to_json(p));
  write_json_file((dir / "trajectory.json").string(), traj);
  return {{"n_samples", scene.measurements.size()},
          {"coverage_percent", coverage_percent(scene.measurements.size(), opts.intrinsics)}};
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string range_csv;
  std::string extrinsic_json;  // optional sensor -> camera pose
  SceneKernelOptions kernel;
  std::string out_path;
};

inline std::vector<AngularMeasurement> load_measurements(const std::string& csv, const std::string& extrinsic_json,
                                                         std::size_t* culled = nullptr) {
  require_file(csv, "range CSV");
  auto points = load_range_csv(csv);
  if (!extrinsic_json.empty()) {
    require_file(extrinsic_json, "extrinsic JSON");
    points = transform_range_points(points, pose_from_json(read_json_file(extrinsic_json)));
  }
  auto ingest = to_angular_measurements(points);
  if (culled) *culled = ingest.culled;
  return std::move(ingest.measurements);
}

inline nlohmann::json cmd_fit(const FitOptions& opts) {
  const auto measurements = load_measurements(opts.range_csv, opts.extrinsic_json);
  if (measurements.empty()) throw InputError(opts.range_csv + ": no measurement in front of the camera");
  const auto res = fit_scene_kernel(measurements, opts.kernel);
  nlohmann::json report = to_json(res.fit);
  report["kernel"] = to_json(res.kernel);
  report["n_measurements"] = measurements.size();
  report["n_used"] = res.n_used;
  if (!opts.out_path.empty()) write_json_file(opts.out_path, report);
  return report;
}

// ---------------------------------------------------------------------------
// reconstruct

/// Reconstruction knobs. Unset values fall back to the JSON config file and
/// then to the defaults: sf2 = (max depth)^2, l fitted by marginal
/// likelihood, r = 3 l, threshold = 0.25 sf2.
struct ReconstructOptions {
  std::string range_csv;
  std::string intrinsics_json;
  std::string config_json;
  std::string extrinsic_json;
  std::string out_dir;

  std::optional<double> radius;
  std::optional<std::size_t> min_points;
  std::optional<std::size_t> max_points;  // kUncapped for no cap
  std::optional<MeanMode> mean_mode;
  std::optional<double> signal_variance;
  std::optional<double> length_scale;
  std::optional<double> noise_variance;
  std::optional<VarianceThreshold> variance_threshold;
  std::optional<double> ell_min;
  std::optional<double> ell_max;
  std::optional<int> n_grid;
  std::optional<int> refine_iters;
  std::optional<std::size_t> max_subsample;
  std::optional<std::uint64_t> fit_seed;
  unsigned workers = 0;
};

namespace detail {

inline void overlay_reconstruct_config(const nlohmann::json& j, ReconstructOptions& o) {
  try {
    auto take_from = [](const nlohmann::json& obj, const char* key, auto& slot) {
      using T = typename std::decay_t<decltype(slot)>::value_type;
      if (!slot && obj.contains(key) && !obj.at(key).is_null()) slot = obj.at(key).get<T>();
    };
    take_from(j, "radius", o.radius);
    take_from(j, "min_points", o.min_points);
    if (!o.max_points && j.contains("max_points"))
      o.max_points = j.at("max_points").is_null() ? kUncapped : j.at("max_points").get<std::size_t>();
    if (!o.mean_mode && j.contains("mean_mode")) o.mean_mode = mean_mode_from_string(j.at("mean_mode").get<std::string>());
    if (j.contains("kernel")) {
      const auto& k = j.at("kernel");
      take_from(k, "sigma_f2", o.signal_variance);
      take_from(k, "ell", o.length_scale);
      take_from(k, "sigma_n2", o.noise_variance);
    }
    if (!o.variance_threshold) {
      if (j.contains("variance_threshold")) o.variance_threshold = VarianceThreshold{j.at("variance_threshold").get<double>(), false};
      else if (j.contains("variance_threshold_rel"))
        o.variance_threshold = VarianceThreshold{j.at("variance_threshold_rel").get<double>(), true};
    }
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      take_from(f, "ell_min", o.ell_min);
      take_from(f, "ell_max", o.ell_max);
      take_from(f, "n_grid", o.n_grid);
      take_from(f, "refine_iters", o.refine_iters);
      take_from(f, "max_subsample", o.max_subsample);
      take_from(f, "seed", o.fit_seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("reconstruct config: " + std::string(e.what()));
  }
}

}  // namespace detail

struct ReconstructResult {
  DepthField field;  // after variance masking
  LocalGPConfig config;
  double variance_threshold = 0.0;
  nlohmann::json summary;
};

/// Runs reconstruction in memory; cmd_reconstruct adds the file output.
inline ReconstructResult run_reconstruct(ReconstructOptions opts) {
  require_file(opts.intrinsics_json, "intrinsics JSON");
  const Intrinsics intr = load_intrinsics(opts.intrinsics_json);
  if (!opts.config_json.empty()) {
    require_file(opts.config_json, "config JSON");
    detail::overlay_reconstruct_config(read_json_file(opts.config_json), opts);
  }
  std::size_t culled = 0;
  const auto measurements = load_measurements(opts.range_csv, opts.extrinsic_json, &culled);
  if (measurements.empty()) throw InputError(opts.range_csv + ": no measurement in front of the camera");

  SceneKernelOptions fit_opts;
  fit_opts.signal_variance = opts.signal_variance;
  if (opts.noise_variance) fit_opts.noise_variance = *opts.noise_variance;
  if (opts.ell_min) fit_opts.search.ell_min = *opts.ell_min;
  if (opts.ell_max) fit_opts.search.ell_max = *opts.ell_max;
  if (opts.n_grid) fit_opts.search.n_grid = *opts.n_grid;
  if (opts.refine_iters) fit_opts.search.refine_iters = *opts.refine_iters;
  if (opts.max_subsample) fit_opts.max_subsample = *opts.max_subsample;
  if (opts.fit_seed) fit_opts.seed = *opts.fit_seed;

  nlohmann::json summary;
  LocalGPConfig cfg;
  if (opts.length_scale) {
    double max_depth = 0.0;
    for (const auto& m : measurements) max_depth = std::max(max_depth, m.depth);
    cfg.kernel.signal_variance = opts.signal_variance.value_or(max_depth * max_depth);
    cfg.kernel.length_scale = *opts.length_scale;
    cfg.kernel.noise_variance = fit_opts.noise_variance;
  } else {
    const auto fitted = fit_scene_kernel(measurements, fit_opts);
    cfg.kernel = fitted.kernel;
    summary["fit"] = to_json(fitted.fit);
  }
  cfg.radius = opts.radius.value_or(default_radius(cfg.kernel));
  if (opts.min_points) cfg.min_points = *opts.min_points;
  if (opts.max_points) cfg.max_points = *opts.max_points;
  if (opts.mean_mode) cfg.mean_mode = *opts.mean_mode;
  cfg.validate();

  const VarianceThreshold thr = opts.variance_threshold.value_or(VarianceThreshold{});
  const double threshold = thr.absolute(cfg.kernel.signal_variance);

  const DepthField raw = reconstruct_depth(measurements, intr, cfg, opts.workers);
  ReconstructResult res{apply_variance_mask(raw, threshold), cfg, threshold, {}};

  const double pixels = static_cast<double>(intr.pixel_count());
  summary["config"] = to_json(cfg);
  summary["variance_threshold"] = threshold;
  summary["n_measurements"] = measurements.size();
  summary["n_culled"] = culled;
  summary["coverage_percent"] = coverage_percent(measurements.size(), intr);
  summary["valid_fraction_before_mask"] = static_cast<double>(raw.valid_count()) / pixels;
  summary["valid_fraction"] = static_cast<double>(res.field.valid_count()) / pixels;
  summary["masked_by_variance"] = raw.valid_count() - res.field.valid_count();
  res.summary = summary;
  return res;
}

/// Writes mean.pfm, variance.pfm, valid.pgm and reconstruct.json.
inline nlohmann::json cmd_reconstruct(const ReconstructOptions& opts) {
  if (opts.out_dir.empty()) throw InputError("missing output directory");
  auto res = run_reconstruct(opts);
  ensure_dir(opts.out_dir);
  const fs::path dir(opts.out_dir);
  save_depth_field(res.field, {(dir / "mean.pfm").string(), (dir / "variance.pfm").string(), (dir / "valid.pgm").string()});
  write_json_file((dir / "reconstruct.json").string(), res.summary);
  return res.summary;
}

// ---------------------------------------------------------------------------
// render

struct RenderOptions {
  std::string image_png;
  std::string depth_pfm;
  std::string valid_pgm;  // optional; default: depth > 0
  std::string intrinsics_json;
  std::string trajectory_json;
  std::string out_dir;
  bool write_zbuffer = false;
  unsigned workers = 0;
};

/// Writes frame_%04d.png and mask_%04d.pgm (and zbuffer_%04d.pfm) per pose.
inline nlohmann::json cmd_render(const RenderOptions& opts) {
  require_file(opts.image_png, "image");
  require_file(opts.depth_pfm, "depth PFM");
  require_file(opts.intrinsics_json, "intrinsics JSON");
  require_file(opts.trajectory_json, "trajectory JSON");
  if (!opts.valid_pgm.empty()) require_file(opts.valid_pgm, "validity mask");
  if (opts.out_dir.empty()) throw InputError("missing output directory");

  const Intrinsics intr = load_intrinsics(opts.intrinsics_json);
  const auto poses = load_trajectory(opts.trajectory_json);
  if (poses.empty()) throw InputError(opts.trajectory_json + ": empty trajectory");
  const RgbImage image = read_png(opts.image_png);
  const DepthField field = load_depth_field(opts.depth_pfm, opts.valid_pgm);

  const auto cloud = backproject(field, image, intr);
  const auto frames = render_trajectory(cloud, poses, intr, opts.workers);

  ensure_dir(opts.out_dir);
  const fs::path dir(opts.out_dir);
  nlohmann::json filled = nlohmann::json::array();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    write_png((dir / frame_name("frame_%04u.png", t)).string(), frames[t].color);
    write_pgm((dir / frame_name("mask_%04u.pgm", t)).string(), mask_to_pgm(frames[t].filled));
    if (opts.write_zbuffer) write_pfm((dir / frame_name("zbuffer_%04u.pfm", t)).string(), to_pfm(frames[t].zbuffer));
    std::size_t n = 0;
    for (auto f : frames[t].filled.data) n += f;
    filled.push_back(static_cast<double>(n) / static_cast<double>(intr.pixel_count()));
  }
  return {{"n_frames", frames.size()}, {"n_points", cloud.size()}, {"filled_fraction", filled}};
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string intrinsics_json;
  std::string pred_pfm;
  std::string pred_valid_pgm;
  std::string gt_csv;  // sparse ground truth (e.g. LiDAR returns)
  std::string gt_pfm;  // dense ground truth; every pixel with depth > 0 is scored
  std::string frames_dir;
  std::string gt_frames_dir;
  std::string out_path;
};

/// Ground truth from a dense depth map: one measurement per positive pixel,
/// at the pixel-centre direction.
inline std::vector<AngularMeasurement> measurements_from_depth_map(const Grid<double>& depth, const Intrinsics& intr) {
  if (depth.width != intr.width || depth.height != intr.height)
    throw InputError("ground-truth depth map does not match the intrinsics");
  std::vector<AngularMeasurement> out;
  for (int v = 0; v < depth.height; ++v)
    for (int u = 0; u < depth.width; ++u)
      if (depth(u, v) > 0.0 && std::isfinite(depth(u, v))) out.push_back({pixel_to_angles(intr, u, v), depth(u, v)});
  return out;
}

/// Report layout:
///   {"depth":  {"mae", "rmse_log", "n_evaluated", "n_skipped"},
///    "images": {"frames": [{"frame", "psnr", "ssim"}], "mean_psnr", "mean_ssim"}}
/// Either block is present only when its inputs are given. Infinite PSNR
/// (identical frames) is written as null.
inline nlohmann::json cmd_eval(const EvalOptions& opts) {
  nlohmann::json report = nlohmann::json::object();
  const bool depth_mode = !opts.pred_pfm.empty();
  const bool image_mode = !opts.frames_dir.empty() || !opts.gt_frames_dir.empty();
  if (!depth_mode && !image_mode) throw InputError("eval: nothing to evaluate (give a prediction PFM or frame directories)");

  if (depth_mode) {
    require_file(opts.intrinsics_json, "intrinsics JSON");
    require_file(opts.pred_pfm, "prediction PFM");
    if (!opts.pred_valid_pgm.empty()) require_file(opts.pred_valid_pgm, "prediction mask");
    const Intrinsics intr = load_intrinsics(opts.intrinsics_json);
    const DepthField pred = load_depth_field(opts.pred_pfm, opts.pred_valid_pgm);
    std::vector<AngularMeasurement> gt;
    if (!opts.gt_csv.empty()) {
      gt = load_measurements(opts.gt_csv, {});
    } else if (!opts.gt_pfm.empty()) {
      require_file(opts.gt_pfm, "ground-truth PFM");
      gt = measurements_from_depth_map(pfm_to_grid(read_pfm(opts.gt_pfm)), intr);
    } else {
      throw InputError("eval: depth evaluation needs --gt-csv or --gt-pfm");
    }
    report["depth"] = to_json(depth_errors(pred, gt, intr));
  }

  if (image_mode) {
    if (opts.frames_dir.empty() || opts.gt_frames_dir.empty())
      throw InputError("eval: image evaluation needs both --frames and --gt-frames");
    nlohmann::json frames = nlohmann::json::array();
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    std::size_t t = 0;
    for (;; ++t) {
      const auto pred_path = fs::path(opts.frames_dir) / frame_name("frame_%04u.png", t);
      const auto gt_path = fs::path(opts.gt_frames_dir) / frame_name("frame_%04u.png", t);
      if (!fs::exists(pred_path) || !fs::exists(gt_path)) break;
      const auto a = read_png(pred_path.string());
      const auto b = read_png(gt_path.string());
      const double p = psnr(a, b);
      const double s = ssim(a, b);
      psnr_sum += p;
      ssim_sum += s;
      frames.push_back({{"frame", t}, {"psnr", json_number(p)}, {"ssim", s}});
    }
    if (t == 0) throw InputError("eval: no frame_0000.png pair found in the frame directories");
    report["images"] = {{"frames", frames},
                        {"mean_psnr", json_number(psnr_sum / static_cast<double>(t))},
                        {"mean_ssim", ssim_sum / static_cast<double>(t)}};
  }

  if (!opts.out_path.empty()) write_json_file(opts.out_path, report);
  return report;
}

}  // namespace rangedepth
