#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gs2pc/formats.hpp"
#include "gs2pc/scene.hpp"

namespace gs2pc {

enum class AllocationMode { kExact, kBinned };

/// Counts above this are rounded to multiples of kBinWidth in binned mode.
inline constexpr std::int64_t kBinThreshold = 50;
inline constexpr std::int64_t kBinWidth = 5;

struct AllocationPlan {
  std::vector<std::int64_t> per_gaussian_count;
  std::int64_t total_requested = 0;
  AllocationMode mode = AllocationMode::kExact;

  std::int64_t allocated() const;
};

/// sqrt(sum_i exp(s_i)^2): the Euclidean norm of the linear scales.
double gaussian_volume(const Eigen::Vector3d& log_scale);

/// Splits `total` points proportionally to `volumes`.
///
/// Exact mode floors each share and hands the shortfall out by largest
/// remainder (ties: larger volume, then lower index), so counts sum to
/// `total`. Binned mode rounds shares above 50 to the nearest multiple of 5
/// (half up) and keeps the exact count otherwise.
AllocationPlan allocate(std::span<const double> volumes, std::int64_t total, AllocationMode mode);

/// sqrt((x - mu)^T Sigma^-1 (x - mu)) via a triangular solve against the
/// Cholesky factor. Throws DegenerateGaussianError if Sigma is not SPD.
double mahalanobis(const Eigen::Vector3d& point, const Eigen::Vector3d& mean,
                   const Eigen::Matrix3d& covariance);
/// Same, with a precomputed lower Cholesky factor.
double mahalanobis_from_factor(const Eigen::Vector3d& point, const Eigen::Vector3d& mean,
                               const Eigen::Matrix3d& cholesky_lower);

/// Gaussians sharing one per-Gaussian point count, sampled with one RNG stream.
struct SampleBatch {
  std::vector<std::uint32_t> gaussian_indices;
  std::int64_t count_per_gaussian = 0;
  std::uint64_t rng_seed = 0;
};

/// Seed for the batch whose smallest Gaussian index is `first_index`.
std::uint64_t batch_seed(std::uint64_t global_seed, std::uint32_t first_index, std::int64_t count);

/// Largest number of Gaussians placed in one batch.
inline constexpr std::size_t kMaxBatchGaussians = 4096;

/// Groups Gaussians with equal non-zero counts, ascending by index, split into
/// chunks of at most kMaxBatchGaussians. Depends only on the plan and seed.
std::vector<SampleBatch> make_batches(const AllocationPlan& plan, std::uint64_t global_seed);

struct BatchSamples {
  std::vector<Eigen::Vector3f> points;
  std::vector<std::array<std::uint8_t, 3>> colours;
  /// Scene index of the Gaussian each point was drawn from.
  std::vector<std::uint32_t> source;
  std::uint64_t rejected = 0;
  std::uint64_t skipped_gaussians = 0;
};

/// Draws count_per_gaussian points per Gaussian as mu + L z, rejecting points
/// whose Mahalanobis distance exceeds `sigma_threshold`. Rejected slots are
/// redrawn; each slot gets at most `max_rounds` draws in total and any
/// remaining shortfall is accepted.
BatchSamples sample_batch(const SampleBatch& batch, const GaussianScene& scene,
                          double sigma_threshold, int max_rounds);

/// Colour of Gaussian i used for its points: the rendered best colour when
/// the scene was rendered, otherwise the degree-0 SH colour.
std::array<std::uint8_t, 3> point_colour(const GaussianScene& scene, std::size_t i);

struct SamplerConfig {
  double sigma = 2.0;
  bool exact = false;
  int max_rounds = 5;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct SamplingStats {
  std::int64_t requested = 0;
  std::int64_t allocated = 0;
  std::int64_t emitted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t skipped_gaussians = 0;
};

struct SampledPoints {
  PointCloud cloud;
  std::vector<std::uint32_t> source;
  SamplingStats stats;
};

/// Volumes, allocation, batching and sampling. Points are ordered by source
/// Gaussian index and are identical for any thread count.
SampledPoints sample_scene(const GaussianScene& scene, std::int64_t total,
                           const SamplerConfig& config);

PointCloud generate_pointcloud(const GaussianScene& scene, std::int64_t total,
                               const SamplerConfig& config, SamplingStats* stats = nullptr);

}  // namespace gs2pc
