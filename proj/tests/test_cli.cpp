#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "rangedepth/pipeline.hpp"

namespace rd = rangedepth;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / (std::string("rangedepth_cli_") +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  RunResult run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string(RANGEDEPTH_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  // Small synthetic scene: 160x120 step scene, 400 samples.
  void make_scene(const std::string& name) const {
    const auto r = run("synth --out " + path(name) + " --kind two_plane_step --samples 400 --seed 3 --poses 3 "
                       "--pose-step 0.1 --intrinsics " + path("cam.json"));
    ASSERT_EQ(r.exit_code, 0) << r.err;
  }

  void write_camera() const {
    rd::write_json_file(path("cam.json"), rd::to_json(rd::Intrinsics{120, 120, 79.5, 59.5, 160, 120}));
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, EndToEndPipeline) {
  write_camera();
  make_scene("scene");
  const auto s = path("scene");
  for (const char* f : {"measurements.csv", "gt.pfm", "intrinsics.json", "image.png", "trajectory.json"})
    EXPECT_TRUE(fs::exists(fs::path(s) / f)) << f;

  auto r = run("fit --range " + s + "/measurements.csv --grid 8 --refine-iters 10 --out " + path("fit.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto fit = nlohmann::json::parse(r.out);
  EXPECT_GT(fit.at("ell").get<double>(), 0.0);
  EXPECT_EQ(fit.at("n_measurements").get<int>(), 400);

  r = run("reconstruct --range " + s + "/measurements.csv --intrinsics " + s + "/intrinsics.json --out " +
          path("rec") + " --ell 0.05 --workers 2");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_DOUBLE_EQ(summary.at("config").at("radius").get<double>(), 0.15);
  EXPECT_GT(summary.at("valid_fraction").get<double>(), 0.5);
  for (const char* f : {"mean.pfm", "variance.pfm", "valid.pgm", "reconstruct.json"})
    EXPECT_TRUE(fs::exists(fs::path(path("rec")) / f)) << f;

  r = run("render --image " + s + "/image.png --depth " + path("rec") + "/mean.pfm --valid " + path("rec") +
          "/valid.pgm --intrinsics " + s + "/intrinsics.json --trajectory " + s + "/trajectory.json --out " +
          path("frames") + " --zbuffer");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  for (const char* f : {"frame_0000.png", "frame_0002.png", "mask_0001.pgm", "zbuffer_0002.pfm"})
    EXPECT_TRUE(fs::exists(fs::path(path("frames")) / f)) << f;

  r = run("eval --intrinsics " + s + "/intrinsics.json --pred " + path("rec") + "/mean.pfm --pred-valid " +
          path("rec") + "/valid.pgm --gt-pfm " + s + "/gt.pfm --frames " + path("frames") + " --gt-frames " +
          path("frames") + " --out " + path("eval.json"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(path("eval.json")));
  EXPECT_GT(report.at("depth").at("n_evaluated").get<int>(), 0);
  EXPECT_LT(report.at("depth").at("mae").get<double>(), 2.0);
  EXPECT_TRUE(report.at("images").at("mean_psnr").is_null());
  EXPECT_EQ(report.at("images").at("mean_ssim").get<double>(), 1.0);
  EXPECT_EQ(report.at("images").at("frames").size(), 3u);
}

TEST_F(Cli, OutputsAreByteIdenticalAcrossRunsAndWorkers) {
  write_camera();
  make_scene("scene");
  const auto s = path("scene");
  const std::string rec = "reconstruct --range " + s + "/measurements.csv --intrinsics " + s + "/intrinsics.json";
  for (const char* w : {"1", "4"}) {
    for (const char* rep : {"a", "b"}) {
      const auto r = run(rec + " --out " + path(std::string("rec_") + w + rep) + " --workers " + w);
      ASSERT_EQ(r.exit_code, 0) << r.err;
    }
  }
  for (const char* f : {"mean.pfm", "variance.pfm", "valid.pgm", "reconstruct.json"}) {
    const auto ref = slurp(fs::path(path("rec_1a")) / f);
    for (const char* other : {"rec_1b", "rec_4a", "rec_4b"}) EXPECT_EQ(slurp(fs::path(path(other)) / f), ref) << f;
  }
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  write_camera();
  make_scene("scene");
  const auto s = path("scene");
  rd::write_json_file(path("cfg.json"), {{"radius", 0.2},
                                         {"min_points", 4},
                                         {"max_points", nullptr},
                                         {"mean_mode", "local_mean"},
                                         {"kernel", {{"ell", 0.06}, {"sigma_n2", 0.02}}},
                                         {"variance_threshold", 5.0}});
  auto r = run("reconstruct --range " + s + "/measurements.csv --intrinsics " + s + "/intrinsics.json --out " +
               path("rec") + " --config " + path("cfg.json") + " --min-points 5");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("config").at("radius").get<double>(), 0.2);
  EXPECT_EQ(j.at("config").at("min_points").get<int>(), 5);
  EXPECT_TRUE(j.at("config").at("max_points").is_null());
  EXPECT_EQ(j.at("config").at("mean_mode"), "local_mean");
  EXPECT_EQ(j.at("config").at("kernel").at("ell").get<double>(), 0.06);
  EXPECT_EQ(j.at("config").at("kernel").at("sigma_n2").get<double>(), 0.02);
  EXPECT_EQ(j.at("variance_threshold").get<double>(), 5.0);
  EXPECT_FALSE(j.contains("fit"));
}

TEST_F(Cli, MissingInputIsExitOneWithPath) {
  write_camera();
  const auto r = run("reconstruct --range " + path("nope.csv") + " --intrinsics " + path("cam.json") + " --out " +
                     path("rec"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(Cli, MalformedCsvIsExitOneWithRow) {
  write_camera();
  {
    std::ofstream(path("bad.csv")) << "x,y,z\n0,0,5\n1,oops,5\n";
  }
  const auto r = run("reconstruct --range " + path("bad.csv") + " --intrinsics " + path("cam.json") + " --out " +
                     path("rec") + " --ell 0.1");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
}

TEST_F(Cli, OverflowingGramIsExitTwo) {
  write_camera();
  {
    std::ofstream(path("pts.csv")) << "x,y,z\n0,0,5\n0.1,0,5\n0,0.1,5\n";
  }
  const auto r = run("reconstruct --range " + path("pts.csv") + " --intrinsics " + path("cam.json") + " --out " +
                     path("rec") + " --ell 0.1 --sigma-f2 1e308 --sigma-n2 1e308");
  EXPECT_EQ(r.exit_code, 2) << r.err;
  EXPECT_NE(r.err.find("numerical"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrorsAreNonZero) {
  EXPECT_NE(run("").exit_code, 0);
  EXPECT_NE(run("reconstruct --range x.csv").exit_code, 0);
  EXPECT_NE(run("eval").exit_code, 0);
}

TEST_F(Cli, EmptyTrajectoryIsRejected) {
  write_camera();
  make_scene("scene");
  const auto s = path("scene");
  std::ofstream(path("empty.json")) << "[]\n";
  const auto r = run("render --image " + s + "/image.png --depth " + s + "/gt.pfm --intrinsics " + s +
                     "/intrinsics.json --trajectory " + path("empty.json") + " --out " + path("frames"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("empty trajectory"), std::string::npos) << r.err;
}

TEST_F(Cli, IdentityRenderReproducesImageAtValidPixels) {
  write_camera();
  make_scene("scene");
  const auto s = path("scene");
  std::ofstream(path("ident.json")) << "[" << rd::to_json(rd::PoseSE3::identity()).dump() << "]\n";
  nlohmann::json many = nlohmann::json::array();
  for (int i = 0; i < 30; ++i) many.push_back(rd::to_json(rd::PoseSE3::identity()));
  std::ofstream(path("thirty.json")) << many.dump() << "\n";

  auto r = run("render --image " + s + "/image.png --depth " + s + "/gt.pfm --intrinsics " + s +
               "/intrinsics.json --trajectory " + path("ident.json") + " --out " + path("f1"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto image = rd::read_png(s + "/image.png");
  const auto frame = rd::read_png(path("f1") + "/frame_0000.png");
  const auto mask = rd::read_pgm(path("f1") + "/mask_0000.pgm");
  for (std::size_t i = 0; i < image.size(); ++i) {
    ASSERT_EQ(mask.data[i], 255);
    ASSERT_EQ(frame.data[i], image.data[i]);
  }

  r = run("render --image " + s + "/image.png --depth " + s + "/gt.pfm --intrinsics " + s +
          "/intrinsics.json --trajectory " + path("thirty.json") + " --out " + path("f30"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::size_t frames = 0, masks = 0;
  for (const auto& e : fs::directory_iterator(path("f30"))) {
    const auto name = e.path().filename().string();
    frames += name.rfind("frame_", 0) == 0;
    masks += name.rfind("mask_", 0) == 0;
  }
  EXPECT_EQ(frames, 30u);
  EXPECT_EQ(masks, 30u);
}

TEST_F(Cli, EvalKnownCorruption) {
  write_camera();
  make_scene("scene");
  const auto s = path("scene");
  auto gt = rd::read_pfm(s + "/gt.pfm");
  auto shifted = gt;
  for (float& x : shifted.data) x += 1.0f;
  rd::write_pfm(path("plus1.pfm"), shifted);
  const std::string base = "eval --intrinsics " + s + "/intrinsics.json --gt-pfm " + s + "/gt.pfm --pred ";

  auto r = run(base + s + "/gt.pfm");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("depth").at("mae").get<double>(), 0.0);

  r = run(base + path("plus1.pfm"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NEAR(nlohmann::json::parse(r.out).at("depth").at("mae").get<double>(), 1.0, 1e-6);

  rd::write_pfm(path("empty.pfm"), rd::PfmImage{160, 120, 1, std::vector<float>(160 * 120, -1.0f)});
  r = run(base + path("empty.pfm"));
  EXPECT_EQ(r.exit_code, 1);
}

TEST_F(Cli, FitOnDuplicatesIsDegenerate) {
  std::ofstream(path("dup.csv")) << "x,y,z\n1,1,5\n1,1,5\n1,1,5\n";
  const auto r = run("fit --range " + path("dup.csv"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out).at("degenerate").get<bool>());
}

TEST_F(Cli, ReconstructFilesMatchInMemoryResult) {
  write_camera();
  make_scene("scene");
  const auto s = path("scene");
  rd::ReconstructOptions o;
  o.range_csv = s + "/measurements.csv";
  o.intrinsics_json = s + "/intrinsics.json";
  o.out_dir = path("rec");
  o.length_scale = 0.05;
  o.workers = 1;
  rd::cmd_reconstruct(o);
  const auto mem = rd::run_reconstruct(o).field;
  const auto disk = rd::load_depth_field(path("rec") + "/mean.pfm", path("rec") + "/valid.pgm", path("rec") + "/variance.pfm");
  EXPECT_TRUE(disk.valid == mem.valid);
  EXPECT_TRUE(rd::read_pfm(path("rec") + "/mean.pfm") == rd::to_pfm(mem.mean));
  EXPECT_TRUE(rd::read_pfm(path("rec") + "/variance.pfm") == rd::to_pfm(mem.variance));
}

TEST(Pipeline, JsonNumberAndFrameNames) {
  EXPECT_TRUE(rd::json_number(std::numeric_limits<double>::infinity()).is_null());
  EXPECT_EQ(rd::json_number(2.5), 2.5);
  EXPECT_EQ(rd::frame_name("frame_%04u.png", 7), "frame_0007.png");
}

TEST(Pipeline, OverlayFillsOnlyUnsetValues) {
  rd::ReconstructOptions o;
  o.radius = 0.3;
  rd::detail::overlay_reconstruct_config({{"radius", 0.1}, {"min_points", 7}, {"fit", {{"n_grid", 9}, {"seed", 4}}}}, o);
  EXPECT_EQ(*o.radius, 0.3);
  EXPECT_EQ(*o.min_points, 7u);
  EXPECT_EQ(*o.n_grid, 9);
  EXPECT_EQ(*o.fit_seed, 4u);
  EXPECT_FALSE(o.length_scale.has_value());
  EXPECT_THROW(rd::detail::overlay_reconstruct_config({{"radius", "far"}}, o = {}), rd::InputError);
}
