#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/LU>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "gs2pc/errors.hpp"
#include "gs2pc/formats.hpp"

namespace gs2pc {
namespace {

using json = nlohmann::json;

constexpr int kDefaultImageSize = 800;

/// Intrinsic keys that may appear globally or per frame; frame values win.
struct NerfIntrinsics {
  std::optional<double> camera_angle_x, fl_x, fl_y, cx, cy, w, h;

  void overlay(const json& obj) {
    auto take = [&](const char* key, std::optional<double>& slot) {
      if (obj.contains(key) && obj[key].is_number()) slot = obj[key].get<double>();
    };
    take("camera_angle_x", camera_angle_x);
    take("fl_x", fl_x);
    take("fl_y", fl_y);
    take("cx", cx);
    take("cy", cy);
    take("w", w);
    take("h", h);
  }
};

Eigen::Matrix4d parse_matrix(const json& m, const std::string& who) {
  if (!m.is_array() || m.size() < 3) throw FormatError(who + ": transform_matrix must be 4x4");
  Eigen::Matrix4d out = Eigen::Matrix4d::Identity();
  for (int r = 0; r < static_cast<int>(m.size()) && r < 4; ++r) {
    if (!m[r].is_array() || m[r].size() != 4) {
      throw FormatError(who + ": transform_matrix must be 4x4");
    }
    for (int c = 0; c < 4; ++c) out(r, c) = m[r][c].get<double>();
  }
  return out;
}

}  // namespace

std::vector<CameraPose> load_cameras_nerf_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!root.is_object() || !root.contains("frames") || !root["frames"].is_array()) {
    throw FormatError(path.string() + ": expected an object with a 'frames' array");
  }

  NerfIntrinsics global;
  global.overlay(root);

  const auto& frames = root["frames"];
  if (frames.empty()) {
    spdlog::warn("{}: no frames, camera pose list is empty", path.string());
    return {};
  }

  // OpenGL camera axes (y up, looking down -Z) to COLMAP (y down, +Z).
  const Eigen::Matrix4d flip = Eigen::Vector4d(1.0, -1.0, -1.0, 1.0).asDiagonal();

  std::vector<CameraPose> poses;
  poses.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& frame = frames[i];
    CameraPose pose;
    pose.image_id = static_cast<std::int64_t>(i);
    pose.name = frame.value("file_path", std::string("frame_") + std::to_string(i));
    const std::string who = path.string() + " frame '" + pose.name + "'";

    NerfIntrinsics intr = global;
    intr.overlay(frame);
    pose.width = static_cast<int>(std::lround(intr.w.value_or(kDefaultImageSize)));
    pose.height = static_cast<int>(std::lround(intr.h.value_or(kDefaultImageSize)));
    if (intr.fl_x) {
      pose.fx = *intr.fl_x;
      pose.fy = intr.fl_y.value_or(*intr.fl_x);
    } else if (intr.camera_angle_x) {
      pose.fx = pose.fy = 0.5 * pose.width / std::tan(0.5 * *intr.camera_angle_x);
    } else {
      throw FormatError(who + ": neither camera_angle_x nor fl_x is given");
    }
    pose.cx = intr.cx.value_or(pose.width / 2.0);
    pose.cy = intr.cy.value_or(pose.height / 2.0);

    if (!frame.contains("transform_matrix")) throw FormatError(who + ": missing transform_matrix");
    const Eigen::Matrix4d camera_to_world = parse_matrix(frame["transform_matrix"], who);
    Eigen::Matrix4d world_to_camera;
    bool invertible = false;
    double det = 0.0;
    camera_to_world.computeInverseAndDetWithCheck(world_to_camera, det, invertible, 1e-12);
    if (!invertible || !world_to_camera.allFinite()) {
      throw FormatError(who + ": transform_matrix is not invertible");
    }
    pose.world_to_camera = flip * world_to_camera;
    pose.validate();
    poses.push_back(std::move(pose));
  }
  std::stable_sort(poses.begin(), poses.end(),
                   [](const CameraPose& a, const CameraPose& b) { return a.name < b.name; });
  return poses;
}

}  // namespace gs2pc
