// rangedepth: dense depth from sparse range returns, plus rendering and
// evaluation of the resulting conditioning frames.
//
//   rangedepth synth       --out DIR [scene flags]
//   rangedepth fit         --range CSV [--out JSON]
//   rangedepth reconstruct --range CSV --intrinsics JSON --out DIR [knobs]
//   rangedepth render      --image PNG --depth PFM --intrinsics JSON --trajectory JSON --out DIR
//   rangedepth eval        --intrinsics JSON --pred PFM (--gt-csv CSV | --gt-pfm PFM) [--frames DIR --gt-frames DIR]
//
// Exit codes: 0 success, 1 input error, 2 numerical error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rangedepth/pipeline.hpp"

namespace rd = rangedepth;

namespace {

template <typename T>
void set_if(CLI::Option* opt, const T& value, std::optional<T>& slot) {
  if (opt->count() > 0) slot = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized-GP depth reconstruction from sparse range data"};
  app.require_subcommand(1);

  // synth --------------------------------------------------------------------
  rd::SynthOptions synth;
  std::string synth_kind = "fronto_plane";
  std::string synth_intr;
  std::vector<double> synth_normal;
  double synth_coverage = -1.0;
  auto* sc = app.add_subcommand("synth", "Write an analytic test scene (CSV, PFM, JSON, PNG)");
  sc->add_option("--out", synth.out_dir, "Output directory")->required();
  sc->add_option("--kind", synth_kind, "fronto_plane | slanted_plane | two_plane_step");
  sc->add_option("--depth", synth.scene.plane_depth, "Fronto-parallel plane depth (m)");
  sc->add_option("--normal", synth_normal, "Slanted plane normal (3 numbers)")->expected(3);
  sc->add_option("--offset", synth.scene.offset, "Slanted plane offset (m)");
  sc->add_option("--near", synth.scene.near_depth, "Step scene near depth (m)");
  sc->add_option("--far", synth.scene.far_depth, "Step scene far depth (m)");
  sc->add_option("--step-azimuth", synth.scene.step_azimuth, "Step location (rad)");
  sc->add_option("--noise", synth.scene.noise_std, "Depth noise std (m)");
  sc->add_option("--samples", synth.scene.n_samples, "Number of range samples");
  sc->add_option("--coverage", synth_coverage, "Pixel coverage fraction (overrides --samples), e.g. 0.0002");
  sc->add_option("--seed", synth.scene.seed, "Random seed");
  sc->add_option("--intrinsics", synth_intr, "Intrinsics JSON (default 640x480, f=500)");
  sc->add_option("--poses", synth.n_poses, "Poses in the written lateral trajectory");
  sc->add_option("--pose-step", synth.pose_step, "Rightward camera step per pose (m)");

  // fit ----------------------------------------------------------------------
  rd::FitOptions fit;
  double fit_sf2 = 0.0;
  auto* fc = app.add_subcommand("fit", "Fit the RBF length scale by marginal likelihood");
  fc->add_option("--range", fit.range_csv, "Range CSV (x,y,z columns)")->required();
  fc->add_option("--extrinsic", fit.extrinsic_json, "Sensor-to-camera pose JSON");
  fc->add_option("--out", fit.out_path, "Report JSON path");
  auto* fit_sf2_opt = fc->add_option("--sigma-f2", fit_sf2, "Signal variance (default: max depth squared)");
  fc->add_option("--sigma-n2", fit.kernel.noise_variance, "Noise variance (m^2)");
  fc->add_option("--ell-min", fit.kernel.search.ell_min, "Smallest length scale (rad)");
  fc->add_option("--ell-max", fit.kernel.search.ell_max, "Largest length scale (rad)");
  fc->add_option("--grid", fit.kernel.search.n_grid, "Grid size");
  fc->add_option("--refine-iters", fit.kernel.search.refine_iters, "Golden-section iterations");
  fc->add_option("--max-subsample", fit.kernel.max_subsample, "Subsample size for fitting");
  fc->add_option("--seed", fit.kernel.seed, "Subsampling seed");

  // reconstruct --------------------------------------------------------------
  rd::ReconstructOptions rec;
  double rec_radius = 0, rec_sf2 = 0, rec_ell = 0, rec_sn2 = 0, rec_thr = 0, rec_thr_rel = 0;
  double rec_ell_min = 0, rec_ell_max = 0;
  std::size_t rec_min = 0, rec_max = 0, rec_sub = 0;
  int rec_grid = 0, rec_iters = 0;
  std::uint64_t rec_seed = 0;
  std::string rec_mode;
  bool rec_uncapped = false;
  auto* rc = app.add_subcommand("reconstruct", "Dense depth + variance from sparse range points");
  rc->add_option("--range", rec.range_csv, "Range CSV (x,y,z columns)")->required();
  rc->add_option("--intrinsics", rec.intrinsics_json, "Intrinsics JSON")->required();
  rc->add_option("--out", rec.out_dir, "Output directory")->required();
  rc->add_option("--config", rec.config_json, "Config JSON (flags override it)");
  rc->add_option("--extrinsic", rec.extrinsic_json, "Sensor-to-camera pose JSON");
  rc->add_option("--workers", rec.workers, "Worker threads (0 = all cores)");
  auto* o_radius = rc->add_option("--radius", rec_radius, "Neighbourhood radius (rad; default 3*ell)");
  auto* o_min = rc->add_option("--min-points", rec_min, "Minimum neighbourhood size");
  auto* o_max = rc->add_option("--max-points", rec_max, "Neighbourhood cap (nearest first)");
  rc->add_flag("--uncapped", rec_uncapped, "No neighbourhood cap");
  auto* o_mode = rc->add_option("--mean-mode", rec_mode, "zero | local_mean");
  auto* o_sf2 = rc->add_option("--sigma-f2", rec_sf2, "Signal variance (m^2)");
  auto* o_ell = rc->add_option("--ell", rec_ell, "Length scale (rad); skips fitting");
  auto* o_sn2 = rc->add_option("--sigma-n2", rec_sn2, "Noise variance (m^2)");
  auto* o_thr = rc->add_option("--var-threshold", rec_thr, "Absolute variance threshold (m^2)");
  auto* o_thr_rel = rc->add_option("--var-threshold-rel", rec_thr_rel, "Variance threshold as a fraction of sigma_f2");
  auto* o_ell_min = rc->add_option("--ell-min", rec_ell_min, "Fit: smallest length scale");
  auto* o_ell_max = rc->add_option("--ell-max", rec_ell_max, "Fit: largest length scale");
  auto* o_grid = rc->add_option("--grid", rec_grid, "Fit: grid size");
  auto* o_iters = rc->add_option("--refine-iters", rec_iters, "Fit: golden-section iterations");
  auto* o_sub = rc->add_option("--max-subsample", rec_sub, "Fit: subsample size");
  auto* o_seed = rc->add_option("--fit-seed", rec_seed, "Fit: subsampling seed");
  o_thr->excludes(o_thr_rel);

  // render -------------------------------------------------------------------
  rd::RenderOptions ren;
  auto* nc = app.add_subcommand("render", "Splat the coloured point cloud along a trajectory");
  nc->add_option("--image", ren.image_png, "Reference RGB image (PNG)")->required();
  nc->add_option("--depth", ren.depth_pfm, "Depth PFM (e.g. mean.pfm)")->required();
  nc->add_option("--valid", ren.valid_pgm, "Validity PGM (default: depth > 0)");
  nc->add_option("--intrinsics", ren.intrinsics_json, "Intrinsics JSON")->required();
  nc->add_option("--trajectory", ren.trajectory_json, "Trajectory JSON")->required();
  nc->add_option("--out", ren.out_dir, "Output directory")->required();
  nc->add_flag("--zbuffer", ren.write_zbuffer, "Also write zbuffer_%04d.pfm");
  nc->add_option("--workers", ren.workers, "Worker threads (0 = all cores)");

  // eval ---------------------------------------------------------------------
  rd::EvalOptions ev;
  auto* ec = app.add_subcommand("eval", "Depth MAE / RMSE_log and frame PSNR / SSIM");
  ec->add_option("--intrinsics", ev.intrinsics_json, "Intrinsics JSON");
  ec->add_option("--pred", ev.pred_pfm, "Predicted depth PFM");
  ec->add_option("--pred-valid", ev.pred_valid_pgm, "Predicted validity PGM");
  ec->add_option("--gt-csv", ev.gt_csv, "Ground-truth range CSV");
  ec->add_option("--gt-pfm", ev.gt_pfm, "Ground-truth depth PFM");
  ec->add_option("--frames", ev.frames_dir, "Directory of rendered frame_%04d.png");
  ec->add_option("--gt-frames", ev.gt_frames_dir, "Directory of reference frame_%04d.png");
  ec->add_option("--out", ev.out_path, "Report JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json summary;
    if (*sc) {
      synth.scene.kind = rd::scene_kind_from_string(synth_kind);
      if (synth_normal.size() == 3) synth.scene.normal = {synth_normal[0], synth_normal[1], synth_normal[2]};
      if (synth_coverage >= 0.0) synth.coverage = synth_coverage;
      if (!synth_intr.empty()) {
        rd::require_file(synth_intr, "intrinsics JSON");
        synth.intrinsics = rd::load_intrinsics(synth_intr);
      }
      summary = rd::cmd_synth(synth);
    } else if (*fc) {
      if (fit_sf2_opt->count() > 0) fit.kernel.signal_variance = fit_sf2;
      summary = rd::cmd_fit(fit);
    } else if (*rc) {
      set_if(o_radius, rec_radius, rec.radius);
      set_if(o_min, rec_min, rec.min_points);
      set_if(o_max, rec_max, rec.max_points);
      if (rec_uncapped) rec.max_points = rd::kUncapped;
      if (o_mode->count() > 0) rec.mean_mode = rd::mean_mode_from_string(rec_mode);
      set_if(o_sf2, rec_sf2, rec.signal_variance);
      set_if(o_ell, rec_ell, rec.length_scale);
      set_if(o_sn2, rec_sn2, rec.noise_variance);
      if (o_thr->count() > 0) rec.variance_threshold = rd::VarianceThreshold{rec_thr, false};
      if (o_thr_rel->count() > 0) rec.variance_threshold = rd::VarianceThreshold{rec_thr_rel, true};
      set_if(o_ell_min, rec_ell_min, rec.ell_min);
      set_if(o_ell_max, rec_ell_max, rec.ell_max);
      set_if(o_grid, rec_grid, rec.n_grid);
      set_if(o_iters, rec_iters, rec.refine_iters);
      set_if(o_sub, rec_sub, rec.max_subsample);
      set_if(o_seed, rec_seed, rec.fit_seed);
      summary = rd::cmd_reconstruct(rec);
    } else if (*nc) {
      summary = rd::cmd_render(ren);
    } else if (*ec) {
      summary = rd::cmd_eval(ev);
    }
    std::cout << summary.dump(2) << '\n';
    return 0;
  } catch (const rd::NumericalError& e) {
    std::cerr << "rangedepth: numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rangedepth: " << e.what() << '\n';
    return 1;
  }
}
