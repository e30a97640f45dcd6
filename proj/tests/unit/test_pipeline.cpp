#include <array>
#include <cstdio>
#include <fstream>
#include <random>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "gs2pc/errors.hpp"
#include "gs2pc/pipeline.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace gs2pc {
namespace {

using testing::TempDir;

struct CommandResult {
  int status = -1;
  std::string out;
};

/// Runs the CLI with `args`; stdout is captured, stderr goes to `err_file`.
CommandResult run_cli(const std::string& args, const std::filesystem::path& err_file) {
  const std::string cmd =
      std::string("\"") + GS2PC_CLI_PATH + "\" " + args + " 2>\"" + err_file.string() + "\"";
  CommandResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small scene in front of a ring of cameras looking at the origin.
struct Fixture {
  TempDir dir;
  std::filesystem::path scene = dir / "scene.ply";
  std::filesystem::path cameras = dir / "colmap";
  std::vector<CameraPose> poses;

  explicit Fixture(int gaussians = 300) {
    std::mt19937_64 rng(131);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<RawGaussianRecord> records;
    for (int i = 0; i < gaussians; ++i) {
      testing::GaussianSpec g;
      g.position = {u(rng), u(rng), 0.2 * u(rng)};
      g.log_scale = Eigen::Vector3d(-2.5, -2.5, -4.0) + 0.3 * Eigen::Vector3d(u(rng), u(rng), u(rng));
      g.opacity = 0.6 + 0.3 * u(rng);
      g.colour = {0.5 + 0.4 * u(rng), 0.5, 0.5 - 0.4 * u(rng)};
      records.push_back(testing::to_record(g));
    }
    write_gaussians_ply(records, scene);
    for (int k = 0; k < 3; ++k) {
      const double a = 0.3 * (k - 1);
      poses.push_back(testing::look_at({4 * std::sin(a), 0.3, -4 * std::cos(a)},
                                       Eigen::Vector3d::Zero(), 64, 48, 60));
    }
    testing::write_colmap_text(cameras, poses);
  }
};

TEST(DetectFormat, Examples) {
  TempDir dir;
  std::ofstream(dir / "scene.splat") << "";
  std::ofstream(dir / "scene.PLY") << "ply\n";
  std::ofstream(dir / "noext") << "ply\nformat ascii 1.0\n";
  std::ofstream(dir / "transforms.json") << "{}";
  std::ofstream(dir / "notes.txt") << "hello";
  std::filesystem::create_directories(dir / "model");
  std::ofstream(dir / "model" / "cameras.bin") << "";
  std::ofstream(dir / "model" / "images.bin") << "";
  EXPECT_EQ(detect_format(dir / "scene.splat"), InputFormat::kSplat);
  EXPECT_EQ(detect_format(dir / "scene.PLY"), InputFormat::kPly);
  EXPECT_EQ(detect_format(dir / "noext"), InputFormat::kPly);
  EXPECT_EQ(detect_format(dir / "transforms.json"), InputFormat::kNerfJson);
  EXPECT_EQ(detect_format(dir / "model"), InputFormat::kColmapDir);
  try {
    detect_format(dir / "notes.txt");
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find(".splat"), std::string::npos);
  }
  EXPECT_THROW(detect_format(dir / "missing.ply"), UsageError);
  EXPECT_THROW(detect_format(dir.path()), UsageError);
}

TEST(PipelineConfig, Validation) {
  PipelineConfig c;
  c.output = "out.ply";
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.num_points = 0;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.render_scale = 0.0;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.render_scale = 1.01;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.sigma = 0.0;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.skip_cameras = 1;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.background = {0, 256, 0};
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(SurfaceOutputPath, Suffix) {
  EXPECT_EQ(surface_output_path("/a/b/cloud.ply"), std::filesystem::path("/a/b/cloud_surface.ply"));
}

TEST(Run, WithCamerasProducesRenderedColours) {
  Fixture f;
  PipelineConfig c;
  c.input_gaussians = f.scene;
  c.input_cameras = f.cameras;
  c.output = f.dir / "out.ply";
  c.num_points = 20'000;
  const auto report = run(c);
  EXPECT_EQ(report.cameras, 3u);
  EXPECT_EQ(report.images_rendered, 3u);
  EXPECT_TRUE(report.rendered_colours);
  EXPECT_EQ(report.gaussians_loaded, 300u);
  const auto ply = testing::read_ply_oracle(c.output);
  EXPECT_EQ(static_cast<std::int64_t>(ply.vertex_count), report.sampling.emitted);
  EXPECT_NEAR(static_cast<double>(report.sampling.emitted), 20'000.0, 20'000.0 * 0.1);
  for (const char* s : {"load", "cameras", "activate", "render", "sample", "write"}) {
    EXPECT_TRUE(report.stage_seconds.count(s)) << s;
  }
}

TEST(Run, WithoutCamerasUsesBaseColours) {
  Fixture f(20);
  PipelineConfig c;
  c.input_gaussians = f.scene;
  c.output = f.dir / "out.ply";
  c.num_points = 1000;
  c.exact = true;
  const auto report = run(c);
  EXPECT_FALSE(report.rendered_colours);
  EXPECT_EQ(report.images_rendered, 0u);
  const auto scene = activate(load_gaussians_ply(f.scene));
  const auto sampled = sample_scene(scene, 1000, SamplerConfig{2.0, true, 5, 0, 0});
  const auto ply = testing::read_ply_oracle(c.output);
  ASSERT_EQ(ply.vertex_count, sampled.cloud.size());
  for (std::size_t i = 0; i < ply.vertex_count; ++i) {
    EXPECT_EQ(ply.colours[i], point_colour(scene, sampled.source[i]));
  }
}

TEST(Run, FailuresAreTaggedAndCleanUp) {
  Fixture f(50);
  PipelineConfig c;
  c.input_gaussians = f.scene;
  c.input_cameras = f.cameras;
  c.output = f.dir / "out.ply";
  c.num_points = 500;
  c.mesh_prep = true;
  c.surface_points = 5;  // fewer than sor_k points
  try {
    run(c);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "surface");
    EXPECT_FALSE(e.usage());
  }
  EXPECT_FALSE(std::filesystem::exists(c.output));

  c.mesh_prep = false;
  c.num_points = 0;
  try {
    run(c);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "config");
    EXPECT_TRUE(e.usage());
  }
}

TEST(Run, MeshPrepWritesOrientedCloud) {
  Fixture f;
  PipelineConfig c;
  c.input_gaussians = f.scene;
  c.input_cameras = f.cameras;
  c.output = f.dir / "out.ply";
  c.num_points = 2000;
  c.mesh_prep = true;
  c.surface_points = 3000;
  const auto report = run(c);
  ASSERT_TRUE(report.surface.has_value());
  const auto surface = testing::read_ply_oracle(f.dir / "out_surface.ply");
  EXPECT_EQ(surface.properties.size(), 9u);
  EXPECT_GT(surface.vertex_count, 0u);
  for (const auto& n : surface.normals) {
    EXPECT_NEAR(std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]), 1.0, 1e-4);
  }
}

TEST(Run, MeshPrepWithoutCamerasIsUsageError) {
  Fixture f(10);
  PipelineConfig c;
  c.input_gaussians = f.scene;
  c.output = f.dir / "out.ply";
  c.mesh_prep = true;
  try {
    run(c);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_TRUE(e.usage());
  }
}

TEST(StatsJson, Fields) {
  RunReport r;
  r.gaussians_loaded = 7;
  r.sampling.requested = 10;
  r.sampling.emitted = 9;
  r.stage_seconds["load"] = 0.5;
  const auto j = to_json(r);
  EXPECT_EQ(j["gaussians"]["loaded"], 7);
  EXPECT_EQ(j["points"]["requested"], 10);
  EXPECT_EQ(j["points"]["emitted"], 9);
  EXPECT_EQ(j["stage_seconds"]["load"], 0.5);
  EXPECT_FALSE(j.contains("surface"));
}

TEST(Cli, HappyPathWithStatsJson) {
  Fixture f;
  const auto out = f.dir / "cli.ply";
  const auto r = run_cli(f.scene.string() + " -o " + out.string() + " --cameras " +
                             f.cameras.string() + " --num-points 5000 --stats-json --threads 2",
                         f.dir / "err.txt");
  ASSERT_EQ(r.status, 0) << slurp(f.dir / "err.txt");
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["points"]["requested"], 5000);
  EXPECT_EQ(j["colour_source"], "rendered");
  EXPECT_EQ(j["cameras"]["rendered"], 3);
  EXPECT_EQ(testing::read_ply_oracle(out).vertex_count, j["points"]["emitted"].get<std::size_t>());
}

TEST(Cli, MissingCamerasWarnsAndSucceeds) {
  Fixture f(20);
  const auto r = run_cli(f.scene.string() + " -o " + (f.dir / "x.ply").string() +
                             " --num-points 100",
                         f.dir / "err.txt");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(slurp(f.dir / "err.txt").find("no camera poses"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  Fixture f(5);
  const auto out = (f.dir / "x.ply").string();
  EXPECT_EQ(run_cli(f.scene.string() + " -o " + out + " --num-points 0", f.dir / "e").status, 2);
  EXPECT_EQ(run_cli(f.scene.string() + " -o " + out + " --bogus-flag", f.dir / "e").status, 2);
  EXPECT_EQ(run_cli("-o " + out, f.dir / "e").status, 2);
  EXPECT_EQ(run_cli((f.dir / "nope.ply").string() + " -o " + out, f.dir / "e").status, 2);
  EXPECT_EQ(run_cli(f.scene.string() + " -o " + out + " --bbox 1,2,3", f.dir / "e").status, 2);
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Cli, RuntimeFailureExitsOne) {
  Fixture f(5);
  std::ofstream(f.dir / "broken.splat") << std::string(33, 'x');
  const auto r = run_cli((f.dir / "broken.splat").string() + " -o " + (f.dir / "x.ply").string(),
                         f.dir / "err.txt");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(slurp(f.dir / "err.txt").find("[load]"), std::string::npos);
}

TEST(Cli, ConfigFileWithOverride) {
  Fixture f(40);
  std::ofstream(f.dir / "run.ini") << "num-points=777\nexact=true\nseed=5\n";
  const auto r = run_cli(f.scene.string() + " -o " + (f.dir / "x.ply").string() + " --config " +
                             (f.dir / "run.ini").string() + " --seed 6 --stats-json",
                         f.dir / "err.txt");
  ASSERT_EQ(r.status, 0) << slurp(f.dir / "err.txt");
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["points"]["requested"], 777);
  EXPECT_EQ(j["points"]["allocated"], 777);

  // Same seed via file or flag gives the same bytes; a different one does not.
  std::ofstream(f.dir / "seed6.ini") << "num-points=777\nexact=true\nseed=6\n";
  ASSERT_EQ(run_cli(f.scene.string() + " -o " + (f.dir / "y.ply").string() + " --config " +
                        (f.dir / "seed6.ini").string(),
                    f.dir / "err.txt")
                .status,
            0);
  EXPECT_EQ(slurp(f.dir / "x.ply"), slurp(f.dir / "y.ply"));
}

TEST(Cli, HelpExitsZero) {
  TempDir dir;
  const auto r = run_cli("--help", dir / "err.txt");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("--mesh-prep"), std::string::npos);
}

}  // namespace
}  // namespace gs2pc
