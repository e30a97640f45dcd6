#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Geometry>

#include "byte_io.hpp"
#include "gs2pc/errors.hpp"
#include "gs2pc/formats.hpp"

namespace gs2pc {
namespace {

namespace fs = std::filesystem;

// COLMAP model ids, in the order of colmap/src/colmap/sensor/models.h.
constexpr int kSimplePinhole = 0;
constexpr int kPinhole = 1;

const char* model_name(int id) {
  static constexpr const char* kNames[] = {
      "SIMPLE_PINHOLE", "PINHOLE",          "SIMPLE_RADIAL",         "RADIAL",
      "OPENCV",         "OPENCV_FISHEYE",   "FULL_OPENCV",           "FOV",
      "SIMPLE_RADIAL_FISHEYE", "RADIAL_FISHEYE", "THIN_PRISM_FISHEYE"};
  if (id >= 0 && id < static_cast<int>(std::size(kNames))) return kNames[id];
  return "UNKNOWN";
}

struct Intrinsics {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
};

struct ImageEntry {
  std::int64_t image_id = 0;
  std::array<double, 4> qvec{};  // w, x, y, z
  std::array<double, 3> tvec{};
  std::int64_t camera_id = 0;
  std::string name;
};

Intrinsics make_intrinsics(const std::string& model, std::uint64_t width, std::uint64_t height,
                           const std::vector<double>& params) {
  Intrinsics in;
  in.width = static_cast<int>(width);
  in.height = static_cast<int>(height);
  if (model == "SIMPLE_PINHOLE") {
    if (params.size() != 3) throw FormatError("SIMPLE_PINHOLE expects 3 parameters");
    in.fx = in.fy = params[0];
    in.cx = params[1];
    in.cy = params[2];
  } else if (model == "PINHOLE") {
    if (params.size() != 4) throw FormatError("PINHOLE expects 4 parameters");
    in.fx = params[0];
    in.fy = params[1];
    in.cx = params[2];
    in.cy = params[3];
  } else {
    throw FormatError("unsupported camera model: " + model +
                      " (only SIMPLE_PINHOLE and PINHOLE are accepted)");
  }
  return in;
}

std::vector<CameraPose> join(const std::map<std::int64_t, Intrinsics>& cameras,
                             std::vector<ImageEntry> images) {
  std::vector<CameraPose> poses;
  poses.reserve(images.size());
  for (const auto& img : images) {
    const auto cam = cameras.find(img.camera_id);
    if (cam == cameras.end()) {
      throw FormatError("image '" + img.name + "' references missing camera_id " +
                        std::to_string(img.camera_id));
    }
    CameraPose pose;
    pose.image_id = img.image_id;
    pose.name = img.name;
    pose.width = cam->second.width;
    pose.height = cam->second.height;
    pose.fx = cam->second.fx;
    pose.fy = cam->second.fy;
    pose.cx = cam->second.cx;
    pose.cy = cam->second.cy;
    const Eigen::Quaterniond q(img.qvec[0], img.qvec[1], img.qvec[2], img.qvec[3]);
    if (q.norm() == 0.0) throw FormatError("image '" + img.name + "' has a zero quaternion");
    pose.world_to_camera.setIdentity();
    pose.world_to_camera.topLeftCorner<3, 3>() = q.normalized().toRotationMatrix();
    pose.world_to_camera.topRightCorner<3, 1>() =
        Eigen::Vector3d(img.tvec[0], img.tvec[1], img.tvec[2]);
    pose.validate();
    poses.push_back(std::move(pose));
  }
  std::stable_sort(poses.begin(), poses.end(),
                   [](const CameraPose& a, const CameraPose& b) { return a.name < b.name; });
  return poses;
}

/// Non-comment lines; blank lines are kept because images.txt uses them for
/// images without 2D points.
std::vector<std::string> data_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

}  // namespace

std::vector<CameraPose> load_cameras_colmap_binary(const fs::path& cameras_bin,
                                                   const fs::path& images_bin) {
  std::map<std::int64_t, Intrinsics> cameras;
  {
    const auto bytes = detail::read_file_bytes(cameras_bin);
    detail::ByteReader r(bytes.data(), bytes.size());
    const auto count = r.read<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto camera_id = r.read<std::int32_t>();
      const auto model_id = r.read<std::int32_t>();
      const auto width = r.read<std::uint64_t>();
      const auto height = r.read<std::uint64_t>();
      std::size_t n_params = 0;
      if (model_id == kSimplePinhole) {
        n_params = 3;
      } else if (model_id == kPinhole) {
        n_params = 4;
      } else {
        throw FormatError(std::string("unsupported camera model: ") + model_name(model_id) +
                          " (id " + std::to_string(model_id) + ")");
      }
      std::vector<double> params(n_params);
      for (auto& p : params) p = r.read<double>();
      cameras[camera_id] = make_intrinsics(model_name(model_id), width, height, params);
    }
  }

  std::vector<ImageEntry> images;
  {
    const auto bytes = detail::read_file_bytes(images_bin);
    detail::ByteReader r(bytes.data(), bytes.size());
    const auto count = r.read<std::uint64_t>();
    images.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      ImageEntry img;
      img.image_id = r.read<std::uint32_t>();
      for (auto& q : img.qvec) q = r.read<double>();
      for (auto& t : img.tvec) t = r.read<double>();
      img.camera_id = r.read<std::uint32_t>();
      img.name = r.read_cstring();
      const auto n_points = r.read<std::uint64_t>();
      // x, y (double) and point3D_id (int64) per observation.
      r.skip(n_points * 24);
      images.push_back(std::move(img));
    }
  }
  return join(cameras, std::move(images));
}

std::vector<CameraPose> load_cameras_colmap_text(const fs::path& cameras_txt,
                                                 const fs::path& images_txt) {
  std::map<std::int64_t, Intrinsics> cameras;
  for (const auto& line : data_lines(cameras_txt)) {
    if (blank(line)) continue;
    std::istringstream ss(line);
    std::int64_t camera_id = 0;
    std::string model;
    std::uint64_t width = 0, height = 0;
    if (!(ss >> camera_id >> model >> width >> height)) {
      throw FormatError("malformed cameras.txt line: " + line);
    }
    std::vector<double> params;
    double p = 0;
    while (ss >> p) params.push_back(p);
    cameras[camera_id] = make_intrinsics(model, width, height, params);
  }

  std::vector<ImageEntry> images;
  const auto lines = data_lines(images_txt);
  for (std::size_t i = 0; i < lines.size();) {
    if (blank(lines[i])) {
      ++i;
      continue;
    }
    std::istringstream ss(lines[i]);
    ImageEntry img;
    if (!(ss >> img.image_id >> img.qvec[0] >> img.qvec[1] >> img.qvec[2] >> img.qvec[3] >>
          img.tvec[0] >> img.tvec[1] >> img.tvec[2] >> img.camera_id)) {
      throw FormatError("malformed images.txt line: " + lines[i]);
    }
    std::getline(ss >> std::ws, img.name);
    while (!img.name.empty() && (img.name.back() == ' ' || img.name.back() == '\t')) {
      img.name.pop_back();
    }
    images.push_back(std::move(img));
    // The following line holds the 2D observations (possibly empty).
    i += 2;
  }
  return join(cameras, std::move(images));
}

std::optional<fs::path> find_colmap_model(const fs::path& dir) {
  for (const fs::path& candidate : {dir, dir / "sparse" / "0", dir / "sparse"}) {
    if ((fs::exists(candidate / "cameras.bin") && fs::exists(candidate / "images.bin")) ||
        (fs::exists(candidate / "cameras.txt") && fs::exists(candidate / "images.txt"))) {
      return candidate;
    }
  }
  return std::nullopt;
}

std::vector<CameraPose> load_cameras_colmap(const fs::path& dir) {
  const auto model = find_colmap_model(dir);
  if (!model) {
    throw IoError("no cameras.bin/images.bin or cameras.txt/images.txt under " + dir.string());
  }
  if (fs::exists(*model / "cameras.bin") && fs::exists(*model / "images.bin")) {
    return load_cameras_colmap_binary(*model / "cameras.bin", *model / "images.bin");
  }
  return load_cameras_colmap_text(*model / "cameras.txt", *model / "images.txt");
}

}  // namespace gs2pc
