#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "gs2pc/renderer.hpp"
#include "gs2pc/sampler.hpp"
#include "gs2pc/scene.hpp"
#include "gs2pc/surface.hpp"

namespace gs2pc {

enum class InputFormat { kPly, kSplat, kColmapDir, kNerfJson };

const char* to_string(InputFormat format);

/// Classifies an input path by extension, then by the "ply\n" magic;
/// directories are probed for a COLMAP model. Throws UsageError otherwise.
InputFormat detect_format(const std::filesystem::path& path);

struct PipelineConfig {
  std::filesystem::path input_gaussians;
  std::optional<std::filesystem::path> input_cameras;
  std::filesystem::path output;

  std::int64_t num_points = 10'000'000;
  double sigma = 2.0;
  bool exact = false;
  int max_resample_rounds = 5;
  std::uint64_t seed = 0;

  double render_scale = 1.0;
  int skip_cameras = 0;
  std::int64_t tile_budget = kDefaultTileBudget;
  std::array<int, 3> background{0, 0, 0};
  std::optional<std::filesystem::path> save_renders;

  FilterConfig filters;

  bool mesh_prep = false;
  std::int64_t surface_points = 5'000'000;
  int sor_k = 20;
  double sor_std = 2.0;

  int threads = 0;

  /// Throws UsageError on out-of-range values.
  void validate() const;
};

/// Output path of the oriented surface cloud: "<stem>_surface.ply".
std::filesystem::path surface_output_path(const std::filesystem::path& output);

struct RunReport {
  std::size_t gaussians_loaded = 0;
  std::size_t gaussians_degenerate = 0;
  std::size_t gaussians_after_filter = 0;
  std::size_t gaussians_culled = 0;
  std::size_t gaussians_sampled = 0;
  std::size_t cameras = 0;
  std::size_t images_rendered = 0;
  bool rendered_colours = false;
  SamplingStats sampling;
  std::optional<SurfaceStats> surface;
  std::map<std::string, double> stage_seconds;
  std::vector<std::filesystem::path> outputs;
};

nlohmann::json to_json(const RunReport& report);

/// Failure inside run(), tagged with the pipeline stage.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& message, bool usage)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)), usage_(usage) {}

  const std::string& stage() const noexcept { return stage_; }
  /// True when the cause was bad input from the user (exit status 2).
  bool usage() const noexcept { return usage_; }

 private:
  std::string stage_;
  bool usage_;
};

/// load -> activate -> filter -> render colours -> cull -> sample ->
/// (surface export) -> write. Partially written outputs are removed when a
/// stage fails.
RunReport run(const PipelineConfig& config);

}  // namespace gs2pc
