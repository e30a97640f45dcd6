#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "gs2pc/formats.hpp"

namespace gs2pc {

/// Per-Gaussian running maximum of rendered contribution and the colour of
/// the pixel that produced it.
struct ContributionState {
  std::vector<double> best_contribution;
  std::vector<Eigen::Vector3d> best_colour;
  /// Index into the rendered pose list of the view that produced the maximum,
  /// -1 while the Gaussian has not been seen.
  std::vector<std::int32_t> best_view;

  void reset(std::size_t count, const Eigen::Vector3d& background);
};

/// Columnar store of activated Gaussians.
struct GaussianScene {
  std::vector<Eigen::Vector3d> position;
  std::vector<Eigen::Vector3d> log_scale;
  /// Unit quaternions in (w, x, y, z) order.
  std::vector<Eigen::Vector4d> rotation_unit;
  std::vector<double> opacity;
  std::vector<Eigen::Matrix3d> covariance;
  /// Lower Cholesky factor of `covariance`.
  std::vector<Eigen::Matrix3d> cholesky;
  std::vector<Eigen::Vector3d> base_colour;
  ContributionState contribution;
  /// True once a rendering pass has populated `contribution`.
  bool rendered = false;

  std::size_t size() const noexcept { return position.size(); }
  bool empty() const noexcept { return position.empty(); }

  /// Rotation matrix of Gaussian `i`.
  Eigen::Matrix3d rotation_matrix(std::size_t i) const;

  /// Scene holding the Gaussians whose `keep` flag is set, in original order.
  GaussianScene subset(const std::vector<bool>& keep) const;
};

struct Covariance {
  Eigen::Matrix3d sigma;
  Eigen::Matrix3d cholesky;
};

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& wxyz);

/// R diag(exp(2 s)) R^T, with diagonal regularization 1e-8, 1e-7, ... (four
/// attempts) until a Cholesky factorization succeeds. Throws
/// DegenerateGaussianError(index) when all attempts fail.
Covariance build_covariance(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& rotation_unit,
                            std::size_t index = 0);

struct ActivationStats {
  std::size_t loaded = 0;
  std::size_t degenerate = 0;
};

/// Activates raw records: normalized rotation, sigmoid opacity, degree-0 SH
/// colour and covariance. Degenerate covariances are dropped with a warning.
GaussianScene activate(const std::vector<RawGaussianRecord>& records,
                       ActivationStats* stats = nullptr);

struct BoundingBox {
  Eigen::Vector3d min;
  Eigen::Vector3d max;

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Every filter is optional; an all-empty config keeps everything.
struct FilterConfig {
  std::optional<BoundingBox> bbox;
  /// Upper bound on the largest per-axis linear scale exp(s).
  std::optional<double> max_scale;
  std::optional<double> min_opacity;
};

/// True when Gaussian `i` passes every enabled filter.
bool passes_filters(const GaussianScene& scene, std::size_t i, const FilterConfig& filters);

/// Keeps Gaussians passing every enabled filter, preserving order. Throws
/// DomainError when nothing survives.
GaussianScene filter_scene(const GaussianScene& scene, const FilterConfig& filters);

/// Drops Gaussians that never contributed to a rendered pixel. A scene that
/// was never rendered is returned unchanged.
GaussianScene cull_unrendered(const GaussianScene& scene);

}  // namespace gs2pc
