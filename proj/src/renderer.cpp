#include "gs2pc/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gs2pc/errors.hpp"
#include "gs2pc/parallel.hpp"

namespace gs2pc {
namespace {

bool depth_order(const ProjectedGaussian& a, const ProjectedGaussian& b) {
  if (a.depth != b.depth) return a.depth < b.depth;
  return a.gaussian_index < b.gaussian_index;
}

bool overlaps(const ProjectedGaussian& g, const PixelRect& r) {
  return g.px_max >= r.x0 && g.px_min < r.x1 && g.py_max >= r.y0 && g.py_min < r.y1;
}

/// Pixel range [lo, hi] whose centres (p + 0.5) lie within centre +- extent,
/// clipped to [-1, size] so out-of-range values never overflow an int.
std::pair<int, int> pixel_span(double centre, double extent, int size) {
  const double lo = std::ceil(centre - extent - 0.5);
  const double hi = std::floor(centre + extent - 0.5);
  const double limit = static_cast<double>(size);
  return {static_cast<int>(std::clamp(lo, -1.0, limit)),
          static_cast<int>(std::clamp(hi, -1.0, limit))};
}

void subdivide(const PixelRect& rect, std::vector<std::uint32_t> indices,
               std::span<const ProjectedGaussian> projected, std::int64_t budget,
               std::vector<Tile>& out) {
  const auto load = static_cast<std::int64_t>(indices.size()) * rect.area();
  if (load <= budget || rect.area() <= 1) {
    out.push_back(Tile{rect, std::move(indices)});
    return;
  }
  const int xm = rect.x0 + rect.width() / 2;
  const int ym = rect.y0 + rect.height() / 2;
  const std::array<std::pair<int, int>, 2> xs{{{rect.x0, xm}, {xm, rect.x1}}};
  const std::array<std::pair<int, int>, 2> ys{{{rect.y0, ym}, {ym, rect.y1}}};
  for (const auto& [y0, y1] : ys) {
    for (const auto& [x0, x1] : xs) {
      const PixelRect child{x0, y0, x1, y1};
      if (child.empty()) continue;
      std::vector<std::uint32_t> child_indices;
      for (auto k : indices) {
        if (overlaps(projected[k], child)) child_indices.push_back(k);
      }
      subdivide(child, std::move(child_indices), projected, budget, out);
    }
  }
}

}  // namespace

ViewContributions::ViewContributions(std::size_t gaussian_count)
    : best_(gaussian_count, 0.0),
      colour_(gaussian_count, Eigen::Vector3d::Zero()),
      pixel_(gaussian_count, std::numeric_limits<std::uint64_t>::max()) {}

void ViewContributions::merge(const ContributionUpdate& u) {
  const auto g = u.gaussian_index;
  if (u.contribution > best_[g] || (u.contribution == best_[g] && u.pixel_index < pixel_[g])) {
    best_[g] = u.contribution;
    colour_[g] = u.colour;
    pixel_[g] = u.pixel_index;
  }
}

void ViewContributions::merge_into(ContributionState& state, std::int32_t view_index) const {
  for (std::size_t g = 0; g < best_.size(); ++g) {
    if (best_[g] > state.best_contribution[g]) {
      state.best_contribution[g] = best_[g];
      state.best_colour[g] = colour_[g];
      state.best_view[g] = view_index;
    }
  }
}

std::vector<ProjectedGaussian> project(const GaussianScene& scene, const CameraPose& pose,
                                       ProjectionStats* stats) {
  const Eigen::Matrix3d w = pose.rotation();
  const Eigen::Vector3d t = pose.translation();
  ProjectionStats local;
  std::vector<ProjectedGaussian> out;
  out.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::Vector3d p = w * scene.position[i] + t;
    const double z = p.z();
    if (!(z > kNearPlane)) {
      ++local.behind_near_plane;
      continue;
    }
    ProjectedGaussian g;
    g.gaussian_index = static_cast<std::uint32_t>(i);
    g.depth = z;
    g.opacity = scene.opacity[i];
    g.mean2d = {pose.fx * p.x() / z + pose.cx, pose.fy * p.y() / z + pose.cy};

    Eigen::Matrix<double, 2, 3> jac;
    jac << pose.fx / z, 0.0, -pose.fx * p.x() / (z * z),  //
        0.0, pose.fy / z, -pose.fy * p.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> tw = jac * w;
    g.cov2d = tw * scene.covariance[i] * tw.transpose();
    g.cov2d(0, 1) = g.cov2d(1, 0) = 0.5 * (g.cov2d(0, 1) + g.cov2d(1, 0));
    g.cov2d.diagonal().array() += kLowPassVariance;

    const double det = g.cov2d.determinant();
    if (det > 0.0 && std::isfinite(det)) {
      g.conic = {g.cov2d(1, 1) / det, -g.cov2d(0, 1) / det, g.cov2d(0, 0) / det};
    } else {
      g.conic.setConstant(std::numeric_limits<double>::quiet_NaN());
    }

    const double ex = 3.0 * std::sqrt(std::max(g.cov2d(0, 0), 0.0));
    const double ey = 3.0 * std::sqrt(std::max(g.cov2d(1, 1), 0.0));
    if (!std::isfinite(g.mean2d.x()) || !std::isfinite(g.mean2d.y()) || !std::isfinite(ex) ||
        !std::isfinite(ey)) {
      ++local.off_screen;
      continue;
    }
    std::tie(g.px_min, g.px_max) = pixel_span(g.mean2d.x(), ex, pose.width);
    std::tie(g.py_min, g.py_max) = pixel_span(g.mean2d.y(), ey, pose.height);
    if (g.px_min > g.px_max || g.py_min > g.py_max || g.px_max < 0 || g.py_max < 0 ||
        g.px_min >= pose.width || g.py_min >= pose.height) {
      ++local.off_screen;
      continue;
    }
    out.push_back(g);
  }
  if (stats) *stats = local;
  return out;
}

std::vector<Tile> tile_scene(std::span<const ProjectedGaussian> projected, int width, int height,
                             std::int64_t budget, int base_tile) {
  if (budget <= 0) throw DomainError("tile budget must be positive");
  if (width <= 0 || height <= 0) return {};
  const int tiles_x = (width + base_tile - 1) / base_tile;
  const int tiles_y = (height + base_tile - 1) / base_tile;
  std::vector<std::vector<std::uint32_t>> grid(static_cast<std::size_t>(tiles_x) * tiles_y);

  std::vector<std::uint32_t> order(projected.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<std::uint32_t>(k);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return depth_order(projected[a], projected[b]);
  });

  for (auto k : order) {
    const auto& g = projected[k];
    const int x0 = std::max(g.px_min, 0), x1 = std::min(g.px_max, width - 1);
    const int y0 = std::max(g.py_min, 0), y1 = std::min(g.py_max, height - 1);
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / base_tile; ty <= y1 / base_tile; ++ty) {
      for (int tx = x0 / base_tile; tx <= x1 / base_tile; ++tx) {
        grid[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(k);
      }
    }
  }

  std::vector<Tile> tiles;
  tiles.reserve(grid.size());
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const PixelRect rect{tx * base_tile, ty * base_tile, std::min((tx + 1) * base_tile, width),
                           std::min((ty + 1) * base_tile, height)};
      subdivide(rect, std::move(grid[static_cast<std::size_t>(ty) * tiles_x + tx]), projected,
                budget, tiles);
    }
  }
  return tiles;
}

void composite_tile(const Tile& tile, std::span<const ProjectedGaussian> projected,
                    const GaussianScene& scene, const Eigen::Vector3d& background,
                    ImageBuffer& image, std::vector<ContributionUpdate>& updates,
                    CompositeStats* stats) {
  const std::size_t n = tile.gaussian_indices.size();
  std::vector<double> best(n, 0.0);
  std::vector<Eigen::Vector3d> best_colour(n);
  std::vector<std::uint64_t> best_pixel(n, 0);
  std::vector<bool> singular(n, false);
  std::vector<std::pair<std::size_t, double>> contributors;
  contributors.reserve(std::min<std::size_t>(n, 256));
  std::uint64_t evaluations = 0;

  for (int y = tile.rect.y0; y < tile.rect.y1; ++y) {
    for (int x = tile.rect.x0; x < tile.rect.x1; ++x) {
      double transmittance = 1.0;
      Eigen::Vector3d colour = Eigen::Vector3d::Zero();
      contributors.clear();
      for (std::size_t j = 0; j < n; ++j) {
        const ProjectedGaussian& g = projected[tile.gaussian_indices[j]];
        if (!g.covers(x, y)) continue;
        ++evaluations;
        if (!g.conic.allFinite()) {
          singular[j] = true;
          continue;
        }
        const double dx = x + 0.5 - g.mean2d.x();
        const double dy = y + 0.5 - g.mean2d.y();
        const double power =
            0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) + g.conic[1] * dx * dy;
        if (power < 0.0 || power > kFootprintPower) continue;
        const double alpha = std::min(kMaxAlpha, g.opacity * std::exp(-power));
        if (alpha < kMinAlpha) continue;
        const double contribution = alpha * transmittance;
        colour += contribution * scene.base_colour[g.gaussian_index];
        contributors.emplace_back(j, contribution);
        transmittance *= 1.0 - alpha;
        if (transmittance < kMinTransmittance) break;
      }
      colour += transmittance * background;
      image.at(x, y) = colour;

      const std::uint64_t pixel_index = static_cast<std::uint64_t>(y) * image.width + x;
      // Row-major traversal visits lower pixel indices first, so strict
      // improvement keeps the first-seen pixel on ties.
      for (const auto& [j, c] : contributors) {
        if (c > best[j]) {
          best[j] = c;
          best_colour[j] = colour;
          best_pixel[j] = pixel_index;
        }
      }
    }
  }

  std::uint64_t singular_count = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (singular[j]) ++singular_count;
    if (best[j] > 0.0) {
      updates.push_back({projected[tile.gaussian_indices[j]].gaussian_index, best[j],
                         best_colour[j], best_pixel[j]});
    }
  }
  if (stats) {
    stats->evaluations += evaluations;
    stats->singular += singular_count;
  }
}

RenderedImage render_image(const GaussianScene& scene, const CameraPose& pose,
                           const RenderConfig& config, std::int32_t view_index,
                           ContributionState& state) {
  const CameraPose view = config.render_scale == 1.0 ? pose : pose.scaled(config.render_scale);
  const auto projected = project(scene, view);
  const auto tiles = tile_scene(projected, view.width, view.height, config.tile_budget);

  RenderedImage result{ImageBuffer(view.width, view.height, config.background), {}};
  std::vector<std::vector<ContributionUpdate>> updates(tiles.size());
  std::vector<CompositeStats> tile_stats(tiles.size());
  parallel_for(tiles.size(), config.threads, [&](std::size_t t) {
    composite_tile(tiles[t], projected, scene, config.background, result.image, updates[t],
                   &tile_stats[t]);
  });

  ViewContributions view_max(scene.size());
  for (const auto& tile_updates : updates) {
    for (const auto& u : tile_updates) view_max.merge(u);
  }
  view_max.merge_into(state, view_index);

  auto& s = result.stats;
  s.projected = projected.size();
  s.leaf_tiles = tiles.size();
  s.grid_tiles = static_cast<std::size_t>((view.width + kBaseTileSize - 1) / kBaseTileSize) *
                 ((view.height + kBaseTileSize - 1) / kBaseTileSize);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const auto load = static_cast<std::int64_t>(tiles[t].gaussian_indices.size()) *
                      tiles[t].rect.area();
    s.max_tile_load = std::max(s.max_tile_load, load);
    if (tiles[t].rect.area() > 1) s.max_splittable_load = std::max(s.max_splittable_load, load);
    s.composite.evaluations += tile_stats[t].evaluations;
    s.composite.singular += tile_stats[t].singular;
  }
  return result;
}

bool keep_camera(std::size_t i, int skip_cameras) {
  if (skip_cameras <= 0) return true;
  return (i + 1) % static_cast<std::size_t>(skip_cameras) != 0;
}

RenderStats render_all(GaussianScene& scene, const std::vector<CameraPose>& poses,
                       const RenderConfig& config) {
  if (poses.empty()) throw DomainError("rendering requires at least one camera pose");
  if (!(config.render_scale > 0.0 && config.render_scale <= 1.0)) {
    throw DomainError("render scale must lie in (0, 1]");
  }
  if (config.save_renders) std::filesystem::create_directories(*config.save_renders);

  scene.contribution.reset(scene.size(), config.background);
  RenderStats stats;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (!keep_camera(i, config.skip_cameras)) {
      ++stats.skipped;
      continue;
    }
    const auto rendered =
        render_image(scene, poses[i], config, static_cast<std::int32_t>(i), scene.contribution);
    ++stats.images;
    stats.leaf_tiles += rendered.stats.leaf_tiles;
    stats.max_splittable_load =
        std::max(stats.max_splittable_load, rendered.stats.max_splittable_load);
    stats.singular += rendered.stats.composite.singular;
    spdlog::debug("rendered {} ({}x{}): {} splats, {} tiles", poses[i].name,
                  rendered.image.width, rendered.image.height, rendered.stats.projected,
                  rendered.stats.leaf_tiles);
    if (config.save_renders) {
      write_ppm(rendered.image, *config.save_renders / fmt::format("render_{:05d}.ppm", i));
    }
  }
  if (stats.images == 0) throw DomainError("every camera pose was skipped");
  scene.rendered = true;
  return stats;
}

std::uint8_t quantize_channel(double value) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(value, 0.0, 1.0) * 255.0 + 0.5));
}

void write_ppm(const ImageBuffer& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto& c = image.at(x, y);
      for (int k = 0; k < 3; ++k) row[static_cast<std::size_t>(x) * 3 + k] = static_cast<char>(quantize_channel(c[k]));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gs2pc
