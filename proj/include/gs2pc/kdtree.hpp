#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace gs2pc {

/// Static 3-d tree for exact k-nearest-neighbour queries. Holds a reference
/// to the point array, which must outlive the tree.
class KdTree {
 public:
  explicit KdTree(std::span<const Eigen::Vector3f> points, std::size_t leaf_size = 16);

  /// Squared distances (in double) to the k nearest points other than
  /// `self`, ascending. Returns fewer when the cloud is smaller than k + 1.
  std::vector<double> knn_squared_distances(std::size_t self, std::size_t k) const;

  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;  // bounding box of the node's points
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::span<const Eigen::Vector3f> points_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace gs2pc
