#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rangedepth/local_gp.hpp"
#include "rangedepth/random.hpp"
#include "rangedepth/synth.hpp"

namespace rd = rangedepth;

namespace {

std::vector<rd::AngularMeasurement> random_measurements(rd::CounterRng& rng, std::size_t n, double half_width = 0.5) {
  std::vector<rd::AngularMeasurement> m;
  for (std::size_t i = 0; i < n; ++i)
    m.push_back({{rng.uniform(-half_width, half_width), rng.uniform(-half_width, half_width)}, rng.uniform(2.0, 20.0)});
  return m;
}

rd::Intrinsics small_camera(int w = 32, int h = 24) {
  return {40.0, 40.0, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
}

}  // namespace

TEST(RadiusQuery, MatchesLinearScanProperty) {
  rd::CounterRng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = random_measurements(rng, 300);
    const double r = rng.uniform(0.01, 0.3);
    const auto index = rd::build_index(m, r);
    for (int q = 0; q < 25; ++q) {
      const rd::AngularCoord a{rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
      auto got = rd::radius_query(index, m, a, r);
      for (std::size_t k = 1; k < got.size(); ++k) {
        const double d0 = rd::angular_distance_sq(m[got[k - 1]].angles, a);
        const double d1 = rd::angular_distance_sq(m[got[k]].angles, a);
        ASSERT_TRUE(d0 < d1 || (d0 == d1 && got[k - 1] < got[k]));
      }
      std::sort(got.begin(), got.end());
      ASSERT_EQ(got, oracle::ball(m, a, r));
    }
  }
}

TEST(RadiusQuery, BoundaryIsClosed) {
  const std::vector<rd::AngularMeasurement> m{{{0.25, 0.0}, 1.0}, {{0.0, -0.25}, 1.0}, {{0.2500001, 0.0}, 1.0}};
  const auto index = rd::build_index(m, 0.25);
  const auto got = rd::radius_query(index, m, {0.0, 0.0}, 0.25);
  EXPECT_EQ(std::set<std::size_t>(got.begin(), got.end()), (std::set<std::size_t>{0, 1}));
}

TEST(RadiusQuery, EmptyAndOversizedRadius) {
  const std::vector<rd::AngularMeasurement> none;
  const auto empty_index = rd::build_index(none, 0.1);
  EXPECT_TRUE(rd::radius_query(empty_index, none, {0, 0}, 0.1).empty());
  EXPECT_THROW(rd::radius_query(empty_index, none, {0, 0}, 0.2), rd::InputError);
  EXPECT_THROW(rd::build_index(none, 0.0), rd::InputError);
}

TEST(RadiusQuery, NegativeCellsDoNotAlias) {
  std::vector<rd::AngularMeasurement> m;
  for (int i = -5; i <= 5; ++i)
    for (int j = -5; j <= 5; ++j) m.push_back({{i * 0.1, j * 0.1}, 1.0});
  const auto index = rd::build_index(m, 0.05);
  for (const auto& q : m) {
    const auto got = rd::radius_query(index, m, q.angles, 0.05);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(m[got[0]].angles, q.angles);
  }
}

TEST(LocalGp, WholeDomainRadiusEqualsFullGp) {
  rd::CounterRng rng(9);
  const auto intr = small_camera();
  const auto box = rd::angular_footprint(intr);
  std::vector<rd::AngularMeasurement> m;
  for (int i = 0; i < 40; ++i)
    m.push_back({{rng.uniform(box.azimuth_min, box.azimuth_max), rng.uniform(box.elevation_min, box.elevation_max)},
                 rng.uniform(5.0, 15.0)});
  rd::LocalGPConfig cfg;
  cfg.radius = box.diameter();
  cfg.min_points = 1;
  cfg.max_points = rd::kUncapped;
  cfg.kernel = {100.0, 0.08, 0.05};
  const auto field = rd::reconstruct_depth(m, intr, cfg);

  oracle::Instance in;
  for (const auto& x : m) {
    in.inputs.push_back(x.angles);
    in.targets.push_back(x.depth);
  }
  in.sf2 = 100.0;
  in.ell = 0.08;
  in.sn2 = 0.05;
  in.jitter = rd::kJitterStart * in.sf2;
  for (int v = 0; v < intr.height; v += 3) {
    for (int u = 0; u < intr.width; u += 3) {
      const auto [mean, var] = oracle::posterior(in, rd::pixel_to_angles(intr, u, v));
      if (mean <= 0.0) {
        EXPECT_FALSE(field.is_valid(u, v));
        continue;
      }
      ASSERT_TRUE(field.is_valid(u, v));
      EXPECT_NEAR(field.mean(u, v), mean, 1e-8);
      EXPECT_NEAR(field.variance(u, v), var, 1e-8);
    }
  }
}

TEST(LocalGp, TooFewNeighboursIsInvalid) {
  const auto intr = small_camera();
  const std::vector<rd::AngularMeasurement> m{{{0.0, 0.0}, 10.0}, {{0.01, 0.0}, 10.0}};
  rd::LocalGPConfig cfg;
  cfg.radius = 0.05;
  cfg.min_points = 3;
  cfg.kernel = {100.0, 0.02, 0.01};
  const auto field = rd::reconstruct_depth(m, intr, cfg);
  EXPECT_EQ(field.valid_count(), 0u);
  EXPECT_EQ(field.mean(0, 0), rd::kInvalidDepth);
  EXPECT_EQ(field.variance(0, 0), rd::kInvalidDepth);

  cfg.min_points = 2;
  const auto field2 = rd::reconstruct_depth(m, intr, cfg);
  EXPECT_GT(field2.valid_count(), 0u);
  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u) {
      const auto a = rd::pixel_to_angles(intr, u, v);
      const bool both = rd::angular_distance_sq(a, m[0].angles) <= 0.05 * 0.05 &&
                        rd::angular_distance_sq(a, m[1].angles) <= 0.05 * 0.05;
      EXPECT_EQ(field2.is_valid(u, v), both) << u << "," << v;
    }
}

TEST(LocalGp, NonPositiveMeanIsInvalid) {
  const auto intr = small_camera();
  // Zero-mean GP with sn2 large pulls every prediction toward 0 and below
  // for negative targets; negative depths are never valid output.
  const std::vector<rd::AngularMeasurement> m{{{0.0, 0.0}, -1.0}, {{0.02, 0.0}, -1.0}, {{0.0, 0.02}, -1.0}};
  rd::LocalGPConfig cfg;
  cfg.radius = 0.5;
  cfg.min_points = 1;
  cfg.kernel = {1.0, 0.1, 0.01};
  EXPECT_EQ(rd::reconstruct_depth(m, intr, cfg).valid_count(), 0u);
}

TEST(LocalGp, CapKeepsNearestNeighbours) {
  rd::CounterRng rng(12);
  const auto intr = small_camera(16, 12);
  const auto m = random_measurements(rng, 200, 0.3);
  rd::LocalGPConfig cfg;
  cfg.radius = 0.2;
  cfg.min_points = 3;
  cfg.max_points = 8;
  cfg.kernel = {200.0, 0.05, 0.01};
  const auto field = rd::reconstruct_depth(m, intr, cfg);
  for (int v = 0; v < intr.height; v += 2) {
    for (int u = 0; u < intr.width; u += 2) {
      const auto a = rd::pixel_to_angles(intr, u, v);
      auto ball = oracle::ball(m, a, cfg.radius);
      if (ball.size() < cfg.min_points) {
        EXPECT_FALSE(field.is_valid(u, v));
        continue;
      }
      std::stable_sort(ball.begin(), ball.end(), [&](std::size_t i, std::size_t j) {
        return rd::angular_distance_sq(m[i].angles, a) < rd::angular_distance_sq(m[j].angles, a);
      });
      ball.resize(std::min(ball.size(), cfg.max_points));
      oracle::Instance in;
      for (std::size_t i : ball) {
        in.inputs.push_back(m[i].angles);
        in.targets.push_back(m[i].depth);
      }
      in.sf2 = 200.0;
      in.ell = 0.05;
      in.sn2 = 0.01;
      in.jitter = rd::kJitterStart * in.sf2;
      const auto [mean, var] = oracle::posterior(in, a);
      ASSERT_EQ(field.is_valid(u, v), mean > 0.0);
      if (mean > 0.0) {
        EXPECT_NEAR(field.mean(u, v), mean, 1e-8);
        EXPECT_NEAR(field.variance(u, v), var, 1e-8);
      }
    }
  }
}

TEST(LocalGp, LocalMeanReproducesConstantScene) {
  const auto intr = small_camera();
  rd::SceneSpec spec;
  spec.plane_depth = 7.5;
  spec.n_samples = 150;
  spec.seed = 3;
  const auto scene = rd::sample_scene(spec, intr);
  rd::LocalGPConfig cfg;
  cfg.radius = 0.25;
  cfg.mean_mode = rd::MeanMode::local_mean;
  cfg.kernel = {56.25, 0.08, 0.0};
  const auto field = rd::reconstruct_depth(scene.measurements, intr, cfg);
  ASSERT_GT(field.valid_count(), 0u);
  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u) {
      if (field.is_valid(u, v)) {
        EXPECT_NEAR(field.mean(u, v), 7.5, 1e-9);
      }
    }
}

TEST(LocalGp, OutputIndependentOfWorkerCount) {
  rd::CounterRng rng(44);
  const auto intr = small_camera(40, 30);
  const auto m = random_measurements(rng, 300, 0.5);
  rd::LocalGPConfig cfg;
  cfg.radius = 0.12;
  cfg.kernel = {400.0, 0.04, 0.01};
  const auto one = rd::reconstruct_depth(m, intr, cfg, 1);
  for (unsigned w : {2u, 3u, 4u, 7u, 64u}) EXPECT_TRUE(rd::reconstruct_depth(m, intr, cfg, w) == one) << w;
}

TEST(LocalGp, InvariantToMeasurementOrderWithinTolerance) {
  rd::CounterRng rng(45);
  const auto intr = small_camera(20, 16);
  auto m = random_measurements(rng, 150, 0.4);
  rd::LocalGPConfig cfg;
  cfg.radius = 0.15;
  cfg.kernel = {400.0, 0.05, 0.01};
  const auto a = rd::reconstruct_depth(m, intr, cfg);
  std::reverse(m.begin(), m.end());
  const auto b = rd::reconstruct_depth(m, intr, cfg);
  ASSERT_TRUE(a.valid == b.valid);
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    EXPECT_NEAR(a.mean.data[i], b.mean.data[i], 1e-9);
    EXPECT_NEAR(a.variance.data[i], b.variance.data[i], 1e-9);
  }
}

TEST(LocalGp, RejectsBadConfig) {
  const auto intr = small_camera();
  const std::vector<rd::AngularMeasurement> m{{{0, 0}, 1.0}};
  rd::LocalGPConfig cfg;
  EXPECT_THROW(rd::reconstruct_depth({}, intr, cfg), rd::InputError);
  cfg.radius = -1;
  EXPECT_THROW(rd::reconstruct_depth(m, intr, cfg), rd::InputError);
  cfg = {};
  cfg.min_points = 0;
  EXPECT_THROW(rd::reconstruct_depth(m, intr, cfg), rd::InputError);
  cfg = {};
  cfg.max_points = 2;
  EXPECT_THROW(rd::reconstruct_depth(m, intr, cfg), rd::InputError);
  cfg = {};
  cfg.kernel.length_scale = 0;
  EXPECT_THROW(rd::reconstruct_depth(m, intr, cfg), rd::InputError);
}

TEST(LocalGp, ConfigJson) {
  rd::LocalGPConfig c;
  c.radius = 0.12;
  c.max_points = rd::kUncapped;
  c.mean_mode = rd::MeanMode::local_mean;
  c.kernel = {4.0, 0.04, 0.2};
  const auto j = rd::to_json(c);
  EXPECT_TRUE(j.at("max_points").is_null());
  const auto back = rd::local_config_from_json(j);
  EXPECT_EQ(back.radius, c.radius);
  EXPECT_EQ(back.max_points, rd::kUncapped);
  EXPECT_EQ(back.mean_mode, rd::MeanMode::local_mean);
  EXPECT_EQ(back.kernel, c.kernel);
  EXPECT_THROW(rd::local_config_from_json({{"mean_mode", "median"}}), rd::InputError);
  EXPECT_THROW(rd::local_config_from_json({{"radius", "wide"}}), rd::InputError);
}

TEST(VarianceMask, DropsOnlyAboveThreshold) {
  rd::DepthField f(3, 1);
  f.set(0, 0, 5.0, 0.1);
  f.set(1, 0, 5.0, 0.2);
  f.set(2, 0, 5.0, 0.3);
  const auto masked = rd::apply_variance_mask(f, 0.2);
  EXPECT_TRUE(masked.is_valid(0, 0));
  EXPECT_TRUE(masked.is_valid(1, 0));
  EXPECT_FALSE(masked.is_valid(2, 0));
  EXPECT_EQ(masked.mean(2, 0), rd::kInvalidDepth);
  EXPECT_THROW(rd::apply_variance_mask(f, 0.0), rd::InputError);
  EXPECT_DOUBLE_EQ((rd::VarianceThreshold{0.25, true}.absolute(100.0)), 25.0);
  EXPECT_DOUBLE_EQ((rd::VarianceThreshold{3.0, false}.absolute(100.0)), 3.0);
}

TEST(VarianceMask, MonotoneInThresholdProperty) {
  rd::CounterRng rng(81);
  rd::DepthField f(50, 40);
  for (int v = 0; v < 40; ++v)
    for (int u = 0; u < 50; ++u)
      if (rng.uniform() < 0.8) f.set(u, v, 1.0, rng.uniform(0.0, 2.0));
  std::size_t prev = 0;
  for (double t : {0.01, 0.1, 0.5, 1.0, 1.5, 3.0}) {
    const auto n = rd::apply_variance_mask(f, t).valid_count();
    EXPECT_GE(n, prev);
    prev = n;
  }
  EXPECT_EQ(prev, f.valid_count());
}

TEST(SceneKernel, SubsampleIsCappedAndDeterministic) {
  rd::CounterRng rng(90);
  const auto m = random_measurements(rng, 1200, 0.4);
  rd::SceneKernelOptions opts;
  opts.max_subsample = 100;
  opts.search.n_grid = 6;
  opts.search.refine_iters = 5;
  opts.seed = 17;
  const auto a = rd::fit_scene_kernel(m, opts);
  const auto b = rd::fit_scene_kernel(m, opts);
  EXPECT_EQ(a.n_used, 100u);
  EXPECT_EQ(a.kernel, b.kernel);
  double max_depth = 0;
  for (const auto& x : m) max_depth = std::max(max_depth, x.depth);
  EXPECT_EQ(a.kernel.signal_variance, max_depth * max_depth);
  EXPECT_EQ(a.kernel.noise_variance, 0.01);
  EXPECT_GE(a.kernel.length_scale, opts.search.ell_min);
  EXPECT_LE(a.kernel.length_scale, opts.search.ell_max);
  EXPECT_DOUBLE_EQ(rd::default_radius(a.kernel), 3.0 * a.kernel.length_scale);

  opts.signal_variance = 9.0;
  EXPECT_EQ(rd::fit_scene_kernel(m, opts).kernel.signal_variance, 9.0);
  EXPECT_THROW(rd::fit_scene_kernel({}, opts), rd::InputError);
}
