#pragma once

// Scene, camera and filesystem helpers shared by the unit and acceptance
// suites.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "gs2pc/formats.hpp"
#include "gs2pc/scene.hpp"

namespace gs2pc::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "gs2pc") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// SH-dc coefficient giving base colour `c` (inverse of 0.5 + C0 * dc).
inline double dc_for_colour(double c) { return (c - 0.5) / kShC0; }

struct GaussianSpec {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 0.5;
  Eigen::Vector3d colour = Eigen::Vector3d::Constant(0.5);
};

inline RawGaussianRecord to_record(const GaussianSpec& g) {
  RawGaussianRecord r;
  for (int a = 0; a < 3; ++a) {
    r.position[a] = g.position[a];
    r.log_scale[a] = g.log_scale[a];
    r.sh_dc[a] = dc_for_colour(g.colour[a]);
  }
  r.rotation = {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()};
  r.logit_opacity = logit(g.opacity);
  return r;
}

inline GaussianScene make_scene(const std::vector<GaussianSpec>& specs) {
  std::vector<RawGaussianRecord> records;
  records.reserve(specs.size());
  for (const auto& s : specs) records.push_back(to_record(s));
  return activate(records);
}

/// COLMAP-convention camera at `eye` looking at `target`.
inline CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, int width,
                          int height, double focal,
                          const Eigen::Vector3d& up = Eigen::Vector3d::UnitY()) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Eigen::Vector3d::UnitX());
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  CameraPose pose;
  pose.width = width;
  pose.height = height;
  pose.fx = pose.fy = focal;
  pose.cx = width / 2.0;
  pose.cy = height / 2.0;
  pose.world_to_camera.setIdentity();
  pose.world_to_camera.topLeftCorner<3, 3>() = r;
  pose.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  return pose;
}

/// Camera at the world origin looking down +Z.
inline CameraPose origin_camera(int width, int height, double focal) {
  CameraPose pose;
  pose.width = width;
  pose.height = height;
  pose.fx = pose.fy = focal;
  pose.cx = width / 2.0;
  pose.cy = height / 2.0;
  return pose;
}

inline Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q;
}

/// Random Gaussians in front of `origin_camera`, inside its view frustum.
inline std::vector<GaussianSpec> random_frustum_specs(std::mt19937_64& rng, int count,
                                                      double min_log_scale = -1.6,
                                                      double max_log_scale = -0.4) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GaussianSpec> specs(count);
  for (auto& g : specs) {
    const double z = 3.0 + 5.0 * u(rng);
    g.position = {(u(rng) - 0.5) * 0.8 * z, (u(rng) - 0.5) * 0.8 * z, z};
    for (int a = 0; a < 3; ++a) {
      g.log_scale[a] = min_log_scale + (max_log_scale - min_log_scale) * u(rng);
    }
    g.rotation = random_rotation(rng);
    g.opacity = 0.05 + 0.9 * u(rng);
    g.colour = {u(rng), u(rng), u(rng)};
  }
  return specs;
}

/// COLMAP text model (one PINHOLE camera per image) describing `poses`.
inline void write_colmap_text(const std::filesystem::path& dir,
                              const std::vector<CameraPose>& poses) {
  std::filesystem::create_directories(dir);
  std::ofstream cameras(dir / "cameras.txt");
  std::ofstream images(dir / "images.txt");
  cameras.precision(17);
  images.precision(17);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    cameras << i + 1 << " PINHOLE " << p.width << ' ' << p.height << ' ' << p.fx << ' ' << p.fy
            << ' ' << p.cx << ' ' << p.cy << "\n";
    const Eigen::Quaterniond q(p.rotation());
    const Eigen::Vector3d t = p.translation();
    images << i + 1 << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << t.x()
           << ' ' << t.y() << ' ' << t.z() << ' ' << i + 1 << " view_" << std::setw(4) << std::setfill('0') << i << ".png\n\n";
  }
}

}  // namespace gs2pc::testing
