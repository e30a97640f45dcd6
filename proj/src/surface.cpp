#include "gs2pc/surface.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "gs2pc/errors.hpp"
#include "gs2pc/kdtree.hpp"
#include "gs2pc/parallel.hpp"

namespace gs2pc {

std::size_t SurfaceSelection::count() const {
  return static_cast<std::size_t>(std::count(surface_mask.begin(), surface_mask.end(), true));
}

SurfaceSelection select_surface(const GaussianScene& scene) {
  if (!scene.rendered) {
    throw DomainError("surface selection needs rendered contributions (camera poses required)");
  }
  if (scene.empty()) throw DomainError("surface selection on an empty scene");
  const auto& contrib = scene.contribution.best_contribution;
  double sum = 0.0;
  for (double c : contrib) sum += c;
  SurfaceSelection sel;
  sel.mean_contribution = sum / static_cast<double>(contrib.size());
  sel.surface_mask.resize(contrib.size());
  for (std::size_t i = 0; i < contrib.size(); ++i) {
    sel.surface_mask[i] = contrib[i] >= sel.mean_contribution;
  }
  return sel;
}

std::vector<Eigen::Vector3d> surface_normals(const GaussianScene& scene,
                                             const SurfaceSelection& selection,
                                             const std::vector<CameraPose>& poses) {
  std::vector<Eigen::Vector3d> normals(scene.size(), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (!selection.surface_mask[i]) continue;
    const auto& s = scene.log_scale[i];
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
      if (s[a] < s[axis]) axis = a;
    }
    Eigen::Vector3d n = scene.rotation_matrix(i).col(axis).normalized();
    const auto view = scene.contribution.best_view.empty() ? -1 : scene.contribution.best_view[i];
    if (view >= 0 && static_cast<std::size_t>(view) < poses.size()) {
      if (n.dot(poses[static_cast<std::size_t>(view)].centre() - scene.position[i]) < 0.0) n = -n;
    }
    normals[i] = n;
  }
  return normals;
}

std::vector<double> mean_neighbour_distances(const PointCloud& cloud, int k_neighbours,
                                             int threads) {
  const KdTree tree(cloud.points);
  const auto k = static_cast<std::size_t>(k_neighbours);
  std::vector<double> mean(cloud.size());
  constexpr std::size_t kChunk = 1024;
  const std::size_t chunks = (cloud.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(cloud.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const auto d2 = tree.knn_squared_distances(i, k);
      double sum = 0.0;
      for (double d : d2) sum += std::sqrt(d);
      mean[i] = sum / static_cast<double>(d2.size());
    }
  });
  return mean;
}

std::vector<bool> statistical_inliers(const PointCloud& cloud, int k_neighbours, double std_ratio,
                                      int threads) {
  if (k_neighbours < 1) throw DomainError("outlier removal needs k >= 1");
  if (!(std_ratio > 0.0)) throw DomainError("outlier removal needs a positive std ratio");
  if (cloud.size() <= static_cast<std::size_t>(k_neighbours)) {
    throw DomainError("outlier removal needs more than k = " + std::to_string(k_neighbours) +
                      " points, got " + std::to_string(cloud.size()));
  }
  const auto mean = mean_neighbour_distances(cloud, k_neighbours, threads);
  const auto n = static_cast<double>(mean.size());
  double sum = 0.0;
  for (double m : mean) sum += m;
  const double global_mean = sum / n;
  double sq = 0.0;
  for (double m : mean) sq += (m - global_mean) * (m - global_mean);
  const double stddev = std::sqrt(sq / (n - 1.0));
  const double threshold = global_mean + std_ratio * stddev;

  std::vector<bool> keep(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) keep[i] = mean[i] <= threshold;
  return keep;
}

PointCloud remove_statistical_outliers(const PointCloud& cloud, int k_neighbours, double std_ratio,
                                       int threads) {
  const auto keep = statistical_inliers(cloud, k_neighbours, std_ratio, threads);
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!keep[i]) continue;
    out.points.push_back(cloud.points[i]);
    out.colours.push_back(cloud.colours[i]);
    if (cloud.has_normals()) out.normals.push_back(cloud.normals[i]);
  }
  return out;
}

PointCloud export_surface_cloud(const GaussianScene& scene, const std::vector<CameraPose>& poses,
                                const SurfaceConfig& config, SurfaceStats* stats) {
  const SurfaceSelection selection = select_surface(scene);
  if (selection.count() == 0) throw DomainError("no surface Gaussians selected");
  const auto normals = surface_normals(scene, selection, poses);

  const GaussianScene surface = scene.subset(selection.surface_mask);
  std::vector<std::uint32_t> original;
  original.reserve(surface.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (selection.surface_mask[i]) original.push_back(static_cast<std::uint32_t>(i));
  }

  auto sampled = sample_scene(surface, config.points, config.sampler);
  PointCloud& cloud = sampled.cloud;
  cloud.normals.resize(cloud.size());
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    cloud.normals[p] = normals[original[sampled.source[p]]].cast<float>();
  }

  PointCloud cleaned =
      remove_statistical_outliers(cloud, config.sor_k, config.sor_std, config.sampler.threads);
  spdlog::info("surface cloud: {} Gaussians, {} points, {} outliers removed", surface.size(),
               cloud.size(), cloud.size() - cleaned.size());
  if (stats) {
    stats->surface_gaussians = surface.size();
    stats->mean_contribution = selection.mean_contribution;
    stats->sampling = sampled.stats;
    stats->outliers_removed = cloud.size() - cleaned.size();
  }
  return cleaned;
}

}  // namespace gs2pc
