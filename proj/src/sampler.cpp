#include "gs2pc/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "gs2pc/errors.hpp"
#include "gs2pc/parallel.hpp"
#include "gs2pc/renderer.hpp"

namespace gs2pc {
namespace {

// Emitted points are stored as float; accepting slightly inside the threshold
// keeps the rounded point within it.
constexpr double kAcceptMargin = 1.0 - 1e-7;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct GaussianDraw {
  std::int64_t emitted = 0;
  std::uint64_t rejected = 0;
};

/// Writes up to `count` accepted points for Gaussian g into `out`.
GaussianDraw draw_points(const GaussianScene& scene, std::size_t g, std::int64_t count,
                         double sigma, int max_rounds, std::mt19937_64& rng,
                         std::span<Eigen::Vector3f> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Vector3d& mean = scene.position[g];
  const Eigen::Matrix3d& l = scene.cholesky[g];
  const double limit = sigma * kAcceptMargin;
  GaussianDraw draw;
  std::int64_t remaining = count;
  for (int round = 0; round < max_rounds && remaining > 0; ++round) {
    const std::int64_t attempts = remaining;
    for (std::int64_t a = 0; a < attempts; ++a) {
      Eigen::Vector3d z;
      z[0] = normal(rng);
      z[1] = normal(rng);
      z[2] = normal(rng);
      const Eigen::Vector3f x = (mean + l * z).cast<float>();
      if (mahalanobis_from_factor(x.cast<double>(), mean, l) <= limit) {
        out[static_cast<std::size_t>(draw.emitted++)] = x;
        --remaining;
      } else {
        ++draw.rejected;
      }
    }
  }
  return draw;
}

bool factor_usable(const Eigen::Matrix3d& l) {
  return l.allFinite() && (l.diagonal().array() > 0.0).all();
}

}  // namespace

std::int64_t AllocationPlan::allocated() const {
  return std::accumulate(per_gaussian_count.begin(), per_gaussian_count.end(), std::int64_t{0});
}

double gaussian_volume(const Eigen::Vector3d& log_scale) {
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double e = std::exp(log_scale[i]);
    sum += e * e;
  }
  return std::sqrt(sum);
}

AllocationPlan allocate(std::span<const double> volumes, std::int64_t total, AllocationMode mode) {
  if (total < 1) throw DomainError("point total must be at least 1");
  double sum = 0.0;
  for (double v : volumes) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("volumes must be finite and >= 0");
    sum += v;
  }
  if (!(sum > 0.0)) throw DomainError("all Gaussian volumes are zero");

  const std::size_t n = volumes.size();
  std::vector<double> share(n);
  std::vector<double> remainder(n);
  AllocationPlan plan;
  plan.total_requested = total;
  plan.mode = mode;
  plan.per_gaussian_count.resize(n);
  std::int64_t floored = 0;
  for (std::size_t i = 0; i < n; ++i) {
    share[i] = static_cast<double>(total) * volumes[i] / sum;
    const double f = std::floor(share[i]);
    plan.per_gaussian_count[i] = static_cast<std::int64_t>(f);
    remainder[i] = share[i] - f;
    floored += plan.per_gaussian_count[i];
  }

  std::int64_t shortfall = total - floored;
  if (shortfall != 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
      if (volumes[a] != volumes[b]) return volumes[a] > volumes[b];
      return a < b;
    });
    // Rounding in the shares can push the floors a unit or two off either
    // way; surplus is taken back from the smallest remainders.
    for (std::size_t k = 0; shortfall > 0; k = (k + 1) % n) {
      if (volumes[order[k]] > 0.0) {
        ++plan.per_gaussian_count[order[k]];
        --shortfall;
      }
    }
    for (std::size_t k = n; shortfall < 0 && k-- > 0;) {
      if (plan.per_gaussian_count[order[k]] > 0) {
        --plan.per_gaussian_count[order[k]];
        ++shortfall;
      }
    }
  }

  if (mode == AllocationMode::kBinned) {
    for (std::size_t i = 0; i < n; ++i) {
      if (share[i] > static_cast<double>(kBinThreshold)) {
        plan.per_gaussian_count[i] =
            kBinWidth * static_cast<std::int64_t>(std::floor(share[i] / kBinWidth + 0.5));
      }
    }
  }
  return plan;
}

double mahalanobis_from_factor(const Eigen::Vector3d& point, const Eigen::Vector3d& mean,
                               const Eigen::Matrix3d& cholesky_lower) {
  const Eigen::Vector3d y =
      cholesky_lower.triangularView<Eigen::Lower>().solve(point - mean);
  return y.norm();
}

double mahalanobis(const Eigen::Vector3d& point, const Eigen::Vector3d& mean,
                   const Eigen::Matrix3d& covariance) {
  const Eigen::LLT<Eigen::Matrix3d> llt(covariance);
  if (llt.info() != Eigen::Success) throw DegenerateGaussianError(0);
  const Eigen::Matrix3d l = llt.matrixL();
  if (!factor_usable(l)) throw DegenerateGaussianError(0);
  return mahalanobis_from_factor(point, mean, l);
}

std::uint64_t batch_seed(std::uint64_t global_seed, std::uint32_t first_index,
                         std::int64_t count) {
  std::uint64_t h = splitmix64(global_seed);
  h = splitmix64(h ^ first_index);
  return splitmix64(h ^ static_cast<std::uint64_t>(count));
}

std::vector<SampleBatch> make_batches(const AllocationPlan& plan, std::uint64_t global_seed) {
  std::map<std::int64_t, std::vector<std::uint32_t>> by_count;
  for (std::size_t i = 0; i < plan.per_gaussian_count.size(); ++i) {
    const auto c = plan.per_gaussian_count[i];
    if (c > 0) by_count[c].push_back(static_cast<std::uint32_t>(i));
  }
  std::vector<SampleBatch> batches;
  for (auto& [count, indices] : by_count) {
    for (std::size_t start = 0; start < indices.size(); start += kMaxBatchGaussians) {
      const std::size_t end = std::min(indices.size(), start + kMaxBatchGaussians);
      SampleBatch b;
      b.gaussian_indices.assign(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                indices.begin() + static_cast<std::ptrdiff_t>(end));
      b.count_per_gaussian = count;
      b.rng_seed = batch_seed(global_seed, b.gaussian_indices.front(), count);
      batches.push_back(std::move(b));
    }
  }
  return batches;
}

std::array<std::uint8_t, 3> point_colour(const GaussianScene& scene, std::size_t i) {
  const Eigen::Vector3d& c =
      scene.rendered ? scene.contribution.best_colour[i] : scene.base_colour[i];
  return {quantize_channel(c[0]), quantize_channel(c[1]), quantize_channel(c[2])};
}

BatchSamples sample_batch(const SampleBatch& batch, const GaussianScene& scene,
                          double sigma_threshold, int max_rounds) {
  if (!(sigma_threshold > 0.0)) throw DomainError("sigma threshold must be positive");
  if (max_rounds < 1) throw DomainError("max_rounds must be at least 1");
  BatchSamples out;
  std::mt19937_64 rng(batch.rng_seed);
  std::vector<Eigen::Vector3f> buffer(static_cast<std::size_t>(batch.count_per_gaussian));
  for (const auto g : batch.gaussian_indices) {
    if (!factor_usable(scene.cholesky[g])) {
      ++out.skipped_gaussians;
      continue;
    }
    const auto draw = draw_points(scene, g, batch.count_per_gaussian, sigma_threshold,
                                  max_rounds, rng, buffer);
    const auto colour = point_colour(scene, g);
    out.points.insert(out.points.end(), buffer.begin(), buffer.begin() + draw.emitted);
    out.colours.insert(out.colours.end(), static_cast<std::size_t>(draw.emitted), colour);
    out.source.insert(out.source.end(), static_cast<std::size_t>(draw.emitted), g);
    out.rejected += draw.rejected;
  }
  return out;
}

SampledPoints sample_scene(const GaussianScene& scene, std::int64_t total,
                           const SamplerConfig& config) {
  if (scene.empty()) throw DomainError("cannot sample an empty scene");
  if (!(config.sigma > 0.0)) throw DomainError("sigma threshold must be positive");
  if (config.max_rounds < 1) throw DomainError("max_rounds must be at least 1");

  std::vector<double> volumes(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) volumes[i] = gaussian_volume(scene.log_scale[i]);
  const AllocationPlan plan = allocate(
      volumes, total, config.exact ? AllocationMode::kExact : AllocationMode::kBinned);
  const auto batches = make_batches(plan, config.seed);

  // Every Gaussian owns the output range [offset, offset + count).
  std::vector<std::size_t> offset(scene.size() + 1, 0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    offset[i + 1] = offset[i] + static_cast<std::size_t>(plan.per_gaussian_count[i]);
  }
  std::vector<Eigen::Vector3f> points(offset.back());
  std::vector<std::int64_t> emitted(scene.size(), 0);
  std::vector<std::uint64_t> rejected(batches.size(), 0);
  std::vector<std::uint64_t> skipped(batches.size(), 0);

  parallel_for(batches.size(), config.threads, [&](std::size_t b) {
    const SampleBatch& batch = batches[b];
    std::mt19937_64 rng(batch.rng_seed);
    for (const auto g : batch.gaussian_indices) {
      if (!factor_usable(scene.cholesky[g])) {
        ++skipped[b];
        continue;
      }
      std::span<Eigen::Vector3f> range(points.data() + offset[g],
                                       static_cast<std::size_t>(batch.count_per_gaussian));
      const auto draw = draw_points(scene, g, batch.count_per_gaussian, config.sigma,
                                    config.max_rounds, rng, range);
      emitted[g] = draw.emitted;
      rejected[b] += draw.rejected;
    }
  });

  SampledPoints result;
  auto& cloud = result.cloud;
  const auto emitted_total =
      static_cast<std::size_t>(std::accumulate(emitted.begin(), emitted.end(), std::int64_t{0}));
  cloud.points.reserve(emitted_total);
  cloud.colours.reserve(emitted_total);
  result.source.reserve(emitted_total);
  for (std::size_t g = 0; g < scene.size(); ++g) {
    if (emitted[g] == 0) continue;
    const auto colour = point_colour(scene, g);
    const auto first = points.begin() + static_cast<std::ptrdiff_t>(offset[g]);
    cloud.points.insert(cloud.points.end(), first, first + emitted[g]);
    cloud.colours.insert(cloud.colours.end(), static_cast<std::size_t>(emitted[g]), colour);
    result.source.insert(result.source.end(), static_cast<std::size_t>(emitted[g]),
                         static_cast<std::uint32_t>(g));
  }

  auto& s = result.stats;
  s.requested = total;
  s.allocated = plan.allocated();
  s.emitted = static_cast<std::int64_t>(emitted_total);
  s.rejected = std::accumulate(rejected.begin(), rejected.end(), std::uint64_t{0});
  s.skipped_gaussians = std::accumulate(skipped.begin(), skipped.end(), std::uint64_t{0});
  return result;
}

PointCloud generate_pointcloud(const GaussianScene& scene, std::int64_t total,
                               const SamplerConfig& config, SamplingStats* stats) {
  auto sampled = sample_scene(scene, total, config);
  if (stats) *stats = sampled.stats;
  return std::move(sampled.cloud);
}

}  // namespace gs2pc
