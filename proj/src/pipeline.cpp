#include "gs2pc/pipeline.hpp"

#include <chrono>
#include <fstream>

#include <spdlog/spdlog.h>

#include "gs2pc/errors.hpp"
#include "gs2pc/formats.hpp"

namespace gs2pc {
namespace {

namespace fs = std::filesystem;

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool has_ply_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::string_view(magic, 4) == "ply\n";
}

/// Runs one stage, timing it and tagging any failure with the stage name.
template <typename Fn>
auto stage(const char* name, RunReport& report, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    report.stage_seconds[name] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto result = fn();
      record();
      return result;
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const UsageError& e) {
    throw PipelineError(name, e.what(), true);
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what(), false);
  }
}

}  // namespace

const char* to_string(InputFormat format) {
  switch (format) {
    case InputFormat::kPly: return "ply";
    case InputFormat::kSplat: return "splat";
    case InputFormat::kColmapDir: return "colmap-dir";
    case InputFormat::kNerfJson: return "nerf-json";
  }
  return "unknown";
}

InputFormat detect_format(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("no such file or directory: " + path.string());
  if (fs::is_directory(path)) {
    if (find_colmap_model(path)) return InputFormat::kColmapDir;
    throw UsageError(path.string() +
                     ": directory has no cameras.bin/images.bin or cameras.txt/images.txt");
  }
  const std::string ext = lower(path.extension().string());
  if (ext == ".splat") return InputFormat::kSplat;
  if (ext == ".ply") return InputFormat::kPly;
  if (ext == ".json") return InputFormat::kNerfJson;
  if (has_ply_magic(path)) return InputFormat::kPly;
  throw UsageError(path.string() +
                   ": unrecognized input (supported: .ply, .splat, NeRF .json, COLMAP directory)");
}

void PipelineConfig::validate() const {
  if (num_points < 1) throw UsageError("--num-points must be at least 1");
  if (!(sigma > 0.0)) throw UsageError("--sigma must be positive");
  if (max_resample_rounds < 1) throw UsageError("--max-resample-rounds must be at least 1");
  if (!(render_scale > 0.0 && render_scale <= 1.0)) {
    throw UsageError("--render-scale must lie in (0, 1]");
  }
  if (skip_cameras < 0 || skip_cameras == 1) {
    throw UsageError("--skip-cameras must be 0 (keep all) or at least 2");
  }
  if (tile_budget < 1) throw UsageError("--tile-budget must be positive");
  for (int c : background) {
    if (c < 0 || c > 255) throw UsageError("--background channels must lie in 0..255");
  }
  if (filters.bbox && !(filters.bbox->min.array() <= filters.bbox->max.array()).all()) {
    throw UsageError("--bbox minimum exceeds maximum");
  }
  if (filters.max_scale && !(*filters.max_scale > 0.0)) {
    throw UsageError("--max-scale must be positive");
  }
  if (surface_points < 1) throw UsageError("--surface-points must be at least 1");
  if (sor_k < 1) throw UsageError("--sor-k must be at least 1");
  if (!(sor_std > 0.0)) throw UsageError("--sor-std must be positive");
  if (threads < 0) throw UsageError("--threads must be >= 0");
  if (output.empty()) throw UsageError("an output path is required");
}

fs::path surface_output_path(const fs::path& output) {
  return output.parent_path() / (output.stem().string() + "_surface.ply");
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["gaussians"] = {{"loaded", r.gaussians_loaded},
                    {"degenerate", r.gaussians_degenerate},
                    {"after_filter", r.gaussians_after_filter},
                    {"culled", r.gaussians_culled},
                    {"sampled", r.gaussians_sampled}};
  j["cameras"] = {{"loaded", r.cameras}, {"rendered", r.images_rendered}};
  j["colour_source"] = r.rendered_colours ? "rendered" : "base";
  j["points"] = {{"requested", r.sampling.requested},
                 {"allocated", r.sampling.allocated},
                 {"emitted", r.sampling.emitted},
                 {"rejected", r.sampling.rejected}};
  if (r.surface) {
    j["surface"] = {{"gaussians", r.surface->surface_gaussians},
                    {"mean_contribution", r.surface->mean_contribution},
                    {"points_emitted", r.surface->sampling.emitted},
                    {"outliers_removed", r.surface->outliers_removed}};
  }
  j["stage_seconds"] = r.stage_seconds;
  std::vector<std::string> outputs;
  for (const auto& p : r.outputs) outputs.push_back(p.string());
  j["outputs"] = outputs;
  return j;
}

RunReport run(const PipelineConfig& config) {
  RunReport report;
  stage("config", report, [&] { config.validate(); });

  std::vector<fs::path> written;
  try {
    const auto records = stage("load", report, [&] {
      const InputFormat format = detect_format(config.input_gaussians);
      if (format == InputFormat::kPly) return load_gaussians_ply(config.input_gaussians);
      if (format == InputFormat::kSplat) return load_gaussians_splat(config.input_gaussians);
      throw UsageError(config.input_gaussians.string() + " is a " + to_string(format) +
                       ", expected a .ply or .splat Gaussian scene");
    });

    std::vector<CameraPose> poses;
    if (config.input_cameras) {
      poses = stage("cameras", report, [&] {
        const InputFormat format = detect_format(*config.input_cameras);
        if (format == InputFormat::kColmapDir) return load_cameras_colmap(*config.input_cameras);
        if (format == InputFormat::kNerfJson) return load_cameras_nerf_json(*config.input_cameras);
        throw UsageError(config.input_cameras->string() +
                         " is not a COLMAP directory or NeRF transforms .json");
      });
    }
    report.cameras = poses.size();

    GaussianScene scene = stage("activate", report, [&] {
      ActivationStats act;
      auto s = activate(records, &act);
      report.gaussians_loaded = act.loaded;
      report.gaussians_degenerate = act.degenerate;
      return s;
    });
    scene = stage("filter", report, [&] { return filter_scene(scene, config.filters); });
    report.gaussians_after_filter = scene.size();

    const Eigen::Vector3d background =
        Eigen::Vector3d(config.background[0], config.background[1], config.background[2]) / 255.0;
    if (poses.empty()) {
      spdlog::warn(
          "no camera poses available: colour rendering skipped, point colours come from the "
          "original Gaussians");
      if (config.mesh_prep) {
        throw PipelineError("surface", "--mesh-prep requires camera poses", true);
      }
    } else {
      stage("render", report, [&] {
        RenderConfig rc;
        rc.render_scale = config.render_scale;
        rc.skip_cameras = config.skip_cameras;
        rc.tile_budget = config.tile_budget;
        rc.background = background;
        rc.threads = config.threads;
        rc.save_renders = config.save_renders;
        const auto stats = render_all(scene, poses, rc);
        report.images_rendered = stats.images;
        if (stats.singular > 0) {
          spdlog::warn("{} Gaussian/tile pairs skipped for singular screen covariance",
                       stats.singular);
        }
      });
      report.rendered_colours = true;
      const std::size_t before = scene.size();
      scene = stage("cull", report, [&] { return cull_unrendered(scene); });
      report.gaussians_culled = before - scene.size();
    }
    report.gaussians_sampled = scene.size();

    SamplerConfig sc;
    sc.sigma = config.sigma;
    sc.exact = config.exact;
    sc.max_rounds = config.max_resample_rounds;
    sc.seed = config.seed;
    sc.threads = config.threads;

    const PointCloud cloud = stage("sample", report, [&] {
      return generate_pointcloud(scene, config.num_points, sc, &report.sampling);
    });
    stage("write", report, [&] {
      written.push_back(config.output);
      write_pointcloud_ply(cloud, config.output);
    });

    if (config.mesh_prep) {
      SurfaceConfig surf;
      surf.points = config.surface_points;
      surf.sor_k = config.sor_k;
      surf.sor_std = config.sor_std;
      surf.sampler = sc;
      const PointCloud oriented = stage("surface", report, [&] {
        SurfaceStats stats;
        auto c = export_surface_cloud(scene, poses, surf, &stats);
        report.surface = stats;
        return c;
      });
      stage("write", report, [&] {
        const auto path = surface_output_path(config.output);
        written.push_back(path);
        write_pointcloud_ply(oriented, path);
      });
    }
  } catch (...) {
    for (const auto& path : written) {
      std::error_code ec;
      fs::remove(path, ec);
    }
    throw;
  }
  report.outputs = written;
  return report;
}

}  // namespace gs2pc
