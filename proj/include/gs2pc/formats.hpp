#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

namespace gs2pc {

/// Degree-0 spherical harmonic basis constant, 1 / (2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

/// One Gaussian exactly as stored on disk, before activation.
///
/// Values are widened to double on load so that the .splat log/exp and
/// logit/sigmoid conversions survive a decode-encode-decode cycle.
struct RawGaussianRecord {
  std::array<double, 3> position{};
  std::array<double, 3> log_scale{};
  /// Quaternion in (w, x, y, z) order, not necessarily normalized.
  std::array<double, 4> rotation{1.0, 0.0, 0.0, 0.0};
  double logit_opacity = 0.0;
  std::array<double, 3> sh_dc{};
  /// Higher-order SH coefficients (f_rest_*), kept in index order and unused.
  std::vector<double> sh_rest;
};

/// Pinhole camera with a COLMAP-convention world-to-camera transform
/// (camera looks down +Z, x right, y down).
struct CameraPose {
  std::int64_t image_id = 0;
  std::string name;
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();

  Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  /// Camera centre in world coordinates, -R^T t.
  Eigen::Vector3d centre() const { return -rotation().transpose() * translation(); }

  /// Throws FormatError when intrinsics or the rotation block are invalid.
  void validate() const;

  /// Copy with resolution and intrinsics scaled by `factor`.
  CameraPose scaled(double factor) const;
};

struct PointCloud {
  std::vector<Eigen::Vector3f> points;
  std::vector<std::array<std::uint8_t, 3>> colours;
  /// Empty when the cloud carries no normals.
  std::vector<Eigen::Vector3f> normals;

  std::size_t size() const noexcept { return points.size(); }
  bool has_normals() const noexcept { return !normals.empty(); }
  /// Throws DomainError on length mismatch or non-unit normals.
  void validate() const;
};

// 3DGS PLY (ascii or binary_little_endian). Properties are looked up by name.
std::vector<RawGaussianRecord> load_gaussians_ply(const std::filesystem::path& path);
/// Binary little-endian 3DGS PLY with the standard property names.
void write_gaussians_ply(const std::vector<RawGaussianRecord>& records,
                         const std::filesystem::path& path);

// .splat: 32-byte records of position, linear scale, RGBA and a u8 quaternion.
inline constexpr std::size_t kSplatRecordSize = 32;
std::vector<RawGaussianRecord> decode_splat(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_splat(const std::vector<RawGaussianRecord>& records);
std::vector<RawGaussianRecord> load_gaussians_splat(const std::filesystem::path& path);
void write_gaussians_splat(const std::vector<RawGaussianRecord>& records,
                           const std::filesystem::path& path);

/// Reads cameras/images from a COLMAP model directory. Binary files win over
/// text when both exist; `sparse/0` and `sparse` subdirectories are probed.
std::vector<CameraPose> load_cameras_colmap(const std::filesystem::path& dir);
std::vector<CameraPose> load_cameras_colmap_binary(const std::filesystem::path& cameras_bin,
                                                   const std::filesystem::path& images_bin);
std::vector<CameraPose> load_cameras_colmap_text(const std::filesystem::path& cameras_txt,
                                                 const std::filesystem::path& images_txt);
/// Locates the directory holding a COLMAP model under `dir`, if any.
std::optional<std::filesystem::path> find_colmap_model(const std::filesystem::path& dir);

std::vector<CameraPose> load_cameras_nerf_json(const std::filesystem::path& path);

/// Binary little-endian PLY: x,y,z float, red,green,blue uchar, then
/// nx,ny,nz float when the cloud has normals.
void write_pointcloud_ply(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace gs2pc
