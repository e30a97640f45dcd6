#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "gs2pc/formats.hpp"
#include "gs2pc/sampler.hpp"
#include "gs2pc/scene.hpp"

namespace gs2pc {

struct SurfaceSelection {
  std::vector<bool> surface_mask;
  /// Threshold actually applied: the mean best contribution of the scene.
  double mean_contribution = 0.0;

  std::size_t count() const;
};

/// Keeps Gaussians whose best contribution is at least the scene mean.
/// Requires a rendered scene.
SurfaceSelection select_surface(const GaussianScene& scene);

/// Unit normal per Gaussian along its shortest axis (lowest axis on ties),
/// oriented toward the centre of the camera that recorded its best
/// contribution. Unselected Gaussians get a zero vector.
std::vector<Eigen::Vector3d> surface_normals(const GaussianScene& scene,
                                             const SurfaceSelection& selection,
                                             const std::vector<CameraPose>& poses);

/// Mean distance from each point to its k nearest neighbours (self excluded),
/// summed in ascending distance order.
std::vector<double> mean_neighbour_distances(const PointCloud& cloud, int k_neighbours,
                                             int threads = 0);

/// Per-point keep flags of statistical outlier removal: a point is dropped
/// when its mean k-NN distance exceeds mean + std_ratio * stddev over the
/// cloud (sample standard deviation).
std::vector<bool> statistical_inliers(const PointCloud& cloud, int k_neighbours, double std_ratio,
                                      int threads = 0);

PointCloud remove_statistical_outliers(const PointCloud& cloud, int k_neighbours = 20,
                                       double std_ratio = 2.0, int threads = 0);

struct SurfaceConfig {
  std::int64_t points = 5'000'000;
  int sor_k = 20;
  double sor_std = 2.0;
  SamplerConfig sampler;
};

struct SurfaceStats {
  std::size_t surface_gaussians = 0;
  double mean_contribution = 0.0;
  SamplingStats sampling;
  std::size_t outliers_removed = 0;
};

/// Oriented point cloud sampled from the surface Gaussians only, cleaned by
/// statistical outlier removal. Input for external Poisson reconstruction.
PointCloud export_surface_cloud(const GaussianScene& scene, const std::vector<CameraPose>& poses,
                                const SurfaceConfig& config, SurfaceStats* stats = nullptr);

}  // namespace gs2pc
