#include <algorithm>
#include <cmath>
#include <string>

#include "gs2pc/errors.hpp"
#include "gs2pc/formats.hpp"

namespace gs2pc {

void CameraPose::validate() const {
  const std::string who = "camera '" + name + "' (image " + std::to_string(image_id) + ")";
  if (width <= 0 || height <= 0) {
    throw FormatError(who + ": non-positive image size");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw FormatError(who + ": focal lengths must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw FormatError(who + ": principal point outside the image");
  }
  const Eigen::Matrix3d r = rotation();
  if (!world_to_camera.allFinite() ||
      (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-5) {
    throw FormatError(who + ": rotation block is not orthonormal");
  }
  if (r.determinant() < 0.0) {
    throw FormatError(who + ": rotation block is a reflection");
  }
}

CameraPose CameraPose::scaled(double factor) const {
  CameraPose out = *this;
  out.width = std::max(1, static_cast<int>(std::lround(width * factor)));
  out.height = std::max(1, static_cast<int>(std::lround(height * factor)));
  out.fx = fx * factor;
  out.fy = fy * factor;
  out.cx = cx * factor;
  out.cy = cy * factor;
  return out;
}

void PointCloud::validate() const {
  if (colours.size() != points.size()) {
    throw DomainError("point cloud has " + std::to_string(points.size()) + " points but " +
                      std::to_string(colours.size()) + " colours");
  }
  if (!normals.empty()) {
    if (normals.size() != points.size()) {
      throw DomainError("point cloud has " + std::to_string(points.size()) + " points but " +
                        std::to_string(normals.size()) + " normals");
    }
    for (std::size_t i = 0; i < normals.size(); ++i) {
      if (std::abs(normals[i].norm() - 1.0f) > 1e-4f) {
        throw DomainError("normal " + std::to_string(i) + " is not unit length");
      }
    }
  }
}

}  // namespace gs2pc
