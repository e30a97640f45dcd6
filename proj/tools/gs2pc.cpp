// Command-line front end: converts a Gaussian splatting scene into a
// coloured point cloud, optionally with an oriented surface cloud.

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gs2pc/errors.hpp"
#include "gs2pc/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  // Log to stderr so --stats-json output on stdout stays machine readable.
  spdlog::set_default_logger(spdlog::stderr_color_mt("gs2pc"));
  spdlog::set_pattern("[%l] %v");

  gs2pc::PipelineConfig cfg;
  std::string input, output;
  std::string cameras;
  std::vector<double> bbox;
  std::vector<int> background;
  double max_scale = 0.0, min_opacity = 0.0;
  std::string save_renders;
  bool stats_json = false, verbose = false;

  CLI::App app{"Convert a 3D Gaussian splatting scene (.ply/.splat) into a point cloud"};
  app.set_config("--config", "", "key=value configuration file; command-line flags override it");
  app.add_option("input", input, "Gaussian scene (.ply or .splat)")->required();
  app.add_option("-o,--output", output, "Output point cloud (.ply)")->required();
  app.add_option("--cameras", cameras,
                 "COLMAP model directory or NeRF transforms .json used to render colours");

  app.add_option("--num-points", cfg.num_points, "Total points to generate")
      ->capture_default_str();
  app.add_option("--sigma", cfg.sigma, "Mahalanobis rejection threshold")->capture_default_str();
  app.add_flag("--exact", cfg.exact, "Exact per-Gaussian counts (disables 5-point binning)");
  app.add_option("--max-resample-rounds", cfg.max_resample_rounds,
                 "Draw attempts per point slot before accepting a shortfall")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();

  app.add_option("--render-scale", cfg.render_scale, "Render resolution factor in (0, 1]")
      ->capture_default_str();
  app.add_option("--skip-cameras", cfg.skip_cameras, "Skip every k-th camera (0 = none)")
      ->capture_default_str();
  app.add_option("--tile-budget", cfg.tile_budget,
                 "Max Gaussian-pixel overlaps per tile before it is subdivided")
      ->capture_default_str();
  app.add_option("--background", background, "Background colour R,G,B (0-255)")
      ->delimiter(',')
      ->expected(3);
  app.add_option("--save-renders", save_renders, "Directory for PPM dumps of the renders");

  auto* bbox_opt = app.add_option("--bbox", bbox, "Keep Gaussians inside minx,miny,minz,maxx,maxy,maxz")
                       ->delimiter(',')
                       ->expected(6);
  auto* scale_opt = app.add_option("--max-scale", max_scale, "Drop Gaussians with a larger axis scale");
  auto* opacity_opt = app.add_option("--min-opacity", min_opacity, "Drop Gaussians below this opacity");

  app.add_flag("--mesh-prep", cfg.mesh_prep, "Also export an oriented surface cloud (<output>_surface.ply)");
  app.add_option("--surface-points", cfg.surface_points, "Points in the surface cloud")
      ->capture_default_str();
  app.add_option("--sor-k", cfg.sor_k, "Neighbours for statistical outlier removal")
      ->capture_default_str();
  app.add_option("--sor-std", cfg.sor_std, "Std-dev ratio for statistical outlier removal")
      ->capture_default_str();

  app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_flag("--stats-json", stats_json, "Print run statistics as JSON on stdout");
  app.add_flag("-v,--verbose", verbose, "Verbose logging");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  cfg.input_gaussians = input;
  cfg.output = output;
  if (!cameras.empty()) cfg.input_cameras = cameras;
  if (!save_renders.empty()) cfg.save_renders = save_renders;
  if (!background.empty()) cfg.background = {background[0], background[1], background[2]};
  if (bbox_opt->count() > 0) {
    cfg.filters.bbox = gs2pc::BoundingBox{{bbox[0], bbox[1], bbox[2]}, {bbox[3], bbox[4], bbox[5]}};
  }
  if (scale_opt->count() > 0) cfg.filters.max_scale = max_scale;
  if (opacity_opt->count() > 0) cfg.filters.min_opacity = min_opacity;

  try {
    const auto report = gs2pc::run(cfg);
    if (stats_json) std::cout << gs2pc::to_json(report).dump(2) << std::endl;
    spdlog::info("wrote {} points to {}", report.sampling.emitted, cfg.output.string());
    return kExitOk;
  } catch (const gs2pc::PipelineError& e) {
    spdlog::error("{}", e.what());
    return e.usage() ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}
