#include "gs2pc/scene.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <spdlog/spdlog.h>

#include "gs2pc/errors.hpp"

namespace gs2pc {
namespace {

constexpr double kInitialJitter = 1e-8;
constexpr int kJitterAttempts = 4;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void ContributionState::reset(std::size_t count, const Eigen::Vector3d& background) {
  best_contribution.assign(count, 0.0);
  best_colour.assign(count, background);
  best_view.assign(count, -1);
}

Eigen::Matrix3d GaussianScene::rotation_matrix(std::size_t i) const {
  return quaternion_to_matrix(rotation_unit[i]);
}

GaussianScene GaussianScene::subset(const std::vector<bool>& keep) const {
  GaussianScene out;
  const auto n = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
  out.position.reserve(n);
  out.log_scale.reserve(n);
  out.rotation_unit.reserve(n);
  out.opacity.reserve(n);
  out.covariance.reserve(n);
  out.cholesky.reserve(n);
  out.base_colour.reserve(n);
  out.rendered = rendered;
  const bool has_contrib = contribution.best_contribution.size() == size();
  for (std::size_t i = 0; i < size(); ++i) {
    if (!keep[i]) continue;
    out.position.push_back(position[i]);
    out.log_scale.push_back(log_scale[i]);
    out.rotation_unit.push_back(rotation_unit[i]);
    out.opacity.push_back(opacity[i]);
    out.covariance.push_back(covariance[i]);
    out.cholesky.push_back(cholesky[i]);
    out.base_colour.push_back(base_colour[i]);
    if (has_contrib) {
      out.contribution.best_contribution.push_back(contribution.best_contribution[i]);
      out.contribution.best_colour.push_back(contribution.best_colour[i]);
      out.contribution.best_view.push_back(contribution.best_view[i]);
    }
  }
  return out;
}

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),    //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Covariance build_covariance(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& rotation_unit,
                            std::size_t index) {
  const Eigen::Matrix3d r = quaternion_to_matrix(rotation_unit);
  const Eigen::Vector3d variance = (2.0 * log_scale).array().exp();
  Eigen::Matrix3d sigma = r * variance.asDiagonal() * r.transpose();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  double jitter = kInitialJitter;
  for (int attempt = 0; attempt < kJitterAttempts; ++attempt, jitter *= 10.0) {
    Eigen::Matrix3d candidate = sigma;
    candidate.diagonal().array() += jitter;
    if (!candidate.allFinite()) break;
    Eigen::LLT<Eigen::Matrix3d> llt(candidate);
    if (llt.info() == Eigen::Success) {
      Eigen::Matrix3d l = llt.matrixL();
      if (l.allFinite() && (l.diagonal().array() > 0.0).all()) {
        return {candidate, l};
      }
    }
  }
  throw DegenerateGaussianError(index);
}

GaussianScene activate(const std::vector<RawGaussianRecord>& records, ActivationStats* stats) {
  if (records.empty()) throw DomainError("cannot activate an empty Gaussian list");
  GaussianScene scene;
  const std::size_t n = records.size();
  scene.position.reserve(n);
  scene.log_scale.reserve(n);
  scene.rotation_unit.reserve(n);
  scene.opacity.reserve(n);
  scene.covariance.reserve(n);
  scene.cholesky.reserve(n);
  scene.base_colour.reserve(n);

  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = records[i];
    const Eigen::Vector4d q(rec.rotation[0], rec.rotation[1], rec.rotation[2], rec.rotation[3]);
    const double qnorm = q.norm();
    if (!(qnorm > 0.0) || !std::isfinite(qnorm)) {
      throw DomainError("record " + std::to_string(i) + " has a zero-norm rotation");
    }
    const Eigen::Vector4d q_unit = q / qnorm;
    const Eigen::Vector3d s(rec.log_scale[0], rec.log_scale[1], rec.log_scale[2]);

    Covariance cov;
    try {
      cov = build_covariance(s, q_unit, i);
    } catch (const DegenerateGaussianError& e) {
      ++degenerate;
      spdlog::warn("dropping Gaussian {}: covariance is not positive definite", e.index());
      continue;
    }

    scene.position.emplace_back(rec.position[0], rec.position[1], rec.position[2]);
    scene.log_scale.push_back(s);
    scene.rotation_unit.push_back(q_unit);
    // Clamp keeps opacity strictly inside (0, 1) for extreme logits.
    scene.opacity.push_back(std::clamp(sigmoid(rec.logit_opacity), 1e-12, 1.0 - 1e-12));
    scene.covariance.push_back(cov.sigma);
    scene.cholesky.push_back(cov.cholesky);
    Eigen::Vector3d colour;
    for (int c = 0; c < 3; ++c) colour[c] = std::clamp(0.5 + kShC0 * rec.sh_dc[c], 0.0, 1.0);
    scene.base_colour.push_back(colour);
  }
  if (scene.empty()) throw DomainError("every Gaussian has a degenerate covariance");
  scene.contribution.reset(scene.size(), Eigen::Vector3d::Zero());
  if (stats) {
    stats->loaded = n;
    stats->degenerate = degenerate;
  }
  return scene;
}

bool passes_filters(const GaussianScene& scene, std::size_t i, const FilterConfig& filters) {
  if (filters.bbox && !filters.bbox->contains(scene.position[i])) return false;
  if (filters.max_scale && std::exp(scene.log_scale[i].maxCoeff()) > *filters.max_scale) {
    return false;
  }
  if (filters.min_opacity && scene.opacity[i] < *filters.min_opacity) return false;
  return true;
}

GaussianScene filter_scene(const GaussianScene& scene, const FilterConfig& filters) {
  std::vector<bool> keep(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) keep[i] = passes_filters(scene, i, filters);
  GaussianScene out = scene.subset(keep);
  if (out.empty()) throw DomainError("empty scene after filtering");
  spdlog::info("filters kept {} of {} Gaussians", out.size(), scene.size());
  return out;
}

GaussianScene cull_unrendered(const GaussianScene& scene) {
  if (!scene.rendered) return scene;
  std::vector<bool> keep(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    keep[i] = scene.contribution.best_contribution[i] > 0.0;
  }
  GaussianScene out = scene.subset(keep);
  if (out.empty()) throw DomainError("no Gaussian contributed to any rendered image");
  return out;
}

}  // namespace gs2pc
