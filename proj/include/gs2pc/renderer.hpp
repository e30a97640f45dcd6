#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gs2pc/formats.hpp"
#include "gs2pc/scene.hpp"

namespace gs2pc {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kLowPassVariance = 0.3;
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kMinTransmittance = 1e-4;
/// Footprint cut-off: 0.5 * squared Mahalanobis radius of the 3 sigma ellipse.
inline constexpr double kFootprintPower = 4.5;
inline constexpr int kBaseTileSize = 64;
inline constexpr std::int64_t kDefaultTileBudget = std::int64_t{1} << 24;

/// A Gaussian splatted onto one image.
struct ProjectedGaussian {
  std::uint32_t gaussian_index = 0;
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
  /// Upper triangle (xx, xy, yy) of cov2d^-1.
  Eigen::Vector3d conic = Eigen::Vector3d::Zero();
  double depth = 0.0;
  double opacity = 0.0;
  /// Inclusive pixel range whose centres lie inside the 3 sigma box. Not
  /// clipped to the image.
  int px_min = 0, px_max = -1, py_min = 0, py_max = -1;

  bool covers(int x, int y) const {
    return x >= px_min && x <= px_max && y >= py_min && y <= py_max;
  }
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  std::int64_t area() const noexcept { return std::int64_t{width()} * height(); }
  bool empty() const noexcept { return x1 <= x0 || y1 <= y0; }
};

struct Tile {
  PixelRect rect;
  /// Positions in the projected list, ascending by (depth, gaussian_index).
  std::vector<std::uint32_t> gaussian_indices;
};

struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, const Eigen::Vector3d& fill)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  Eigen::Vector3d& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Eigen::Vector3d& at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

/// Best contribution of one Gaussian within one tile.
struct ContributionUpdate {
  std::uint32_t gaussian_index = 0;
  double contribution = 0.0;
  Eigen::Vector3d colour = Eigen::Vector3d::Zero();
  /// Row-major pixel index y * width + x, used to break ties.
  std::uint64_t pixel_index = 0;
};

/// Per-image maxima keyed by Gaussian. Merging orders candidates by
/// (contribution descending, pixel index ascending), so the result does not
/// depend on the order tiles are merged in.
class ViewContributions {
 public:
  explicit ViewContributions(std::size_t gaussian_count);

  void merge(const ContributionUpdate& update);
  /// Folds this view into the global state with strict improvement, so an
  /// earlier view keeps ties.
  void merge_into(ContributionState& state, std::int32_t view_index) const;

  double contribution(std::size_t i) const { return best_[i]; }
  const Eigen::Vector3d& colour(std::size_t i) const { return colour_[i]; }

 private:
  std::vector<double> best_;
  std::vector<Eigen::Vector3d> colour_;
  std::vector<std::uint64_t> pixel_;
};

struct ProjectionStats {
  std::size_t behind_near_plane = 0;
  std::size_t off_screen = 0;
};

/// EWA projection of every Gaussian into `pose`. Gaussians in front of the
/// near plane whose 3 sigma box misses the image are dropped.
std::vector<ProjectedGaussian> project(const GaussianScene& scene, const CameraPose& pose,
                                       ProjectionStats* stats = nullptr);

/// Regular 64x64 grid, each tile split into quadrants while
/// (Gaussian count x pixel count) exceeds `budget` and the tile has more than
/// one pixel.
std::vector<Tile> tile_scene(std::span<const ProjectedGaussian> projected, int width, int height,
                             std::int64_t budget, int base_tile = kBaseTileSize);

struct CompositeStats {
  std::uint64_t evaluations = 0;
  std::uint64_t singular = 0;
};

/// Front-to-back alpha compositing of one tile. Writes the tile's pixels and
/// appends one update per contributing Gaussian (its best pixel in the tile).
void composite_tile(const Tile& tile, std::span<const ProjectedGaussian> projected,
                    const GaussianScene& scene, const Eigen::Vector3d& background,
                    ImageBuffer& image, std::vector<ContributionUpdate>& updates,
                    CompositeStats* stats = nullptr);

struct RenderConfig {
  double render_scale = 1.0;
  /// Drop every k-th pose (1-based); 0 keeps all.
  int skip_cameras = 0;
  std::int64_t tile_budget = kDefaultTileBudget;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  int threads = 0;
  std::optional<std::filesystem::path> save_renders;
};

struct ImageRenderStats {
  std::size_t projected = 0;
  std::size_t leaf_tiles = 0;
  std::size_t grid_tiles = 0;
  std::int64_t max_tile_load = 0;
  /// Largest load among tiles that still have more than one pixel.
  std::int64_t max_splittable_load = 0;
  CompositeStats composite;
};

struct RenderedImage {
  ImageBuffer image;
  ImageRenderStats stats;
};

/// Renders one view and folds its contributions into `state`.
RenderedImage render_image(const GaussianScene& scene, const CameraPose& pose,
                           const RenderConfig& config, std::int32_t view_index,
                           ContributionState& state);

struct RenderStats {
  std::size_t images = 0;
  std::size_t skipped = 0;
  std::size_t leaf_tiles = 0;
  std::int64_t max_splittable_load = 0;
  std::uint64_t singular = 0;
};

/// True when pose `i` survives the skip rule.
bool keep_camera(std::size_t i, int skip_cameras);

/// Resets the contribution state to (0, background) and renders every kept
/// pose in list order. Afterwards each Gaussian holds the colour of the pixel
/// where its contribution peaked; `best_view` indexes into `poses`.
RenderStats render_all(GaussianScene& scene, const std::vector<CameraPose>& poses,
                       const RenderConfig& config);

/// 8-bit quantization used for every colour output, round half up.
std::uint8_t quantize_channel(double value);

/// Binary PPM (P6), 8 bits per channel.
void write_ppm(const ImageBuffer& image, const std::filesystem::path& path);

}  // namespace gs2pc
