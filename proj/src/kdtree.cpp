#include "gs2pc/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace gs2pc {
namespace {

double squared_distance(const Eigen::Vector3f& a, const Eigen::Vector3f& b) {
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum;
}

double box_squared_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& lo,
                            const Eigen::Vector3d& hi) {
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    double d = 0.0;
    if (p[i] < lo[i]) {
      d = lo[i] - p[i];
    } else if (p[i] > hi[i]) {
      d = p[i] - hi[i];
    }
    sum += d * d;
  }
  return sum;
}

}  // namespace

KdTree::KdTree(std::span<const Eigen::Vector3f> points, std::size_t leaf_size)
    : points_(points), leaf_size_(std::max<std::size_t>(leaf_size, 1)), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), std::uint32_t{0});
  if (!order_.empty()) {
    nodes_.reserve(2 * (order_.size() / leaf_size_ + 1));
    build(0, static_cast<std::uint32_t>(order_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo.setConstant(std::numeric_limits<double>::infinity());
  node.hi.setConstant(-std::numeric_limits<double>::infinity());
  for (auto i = begin; i < end; ++i) {
    const Eigen::Vector3d p = points_[order_[i]].cast<double>();
    node.lo = node.lo.cwiseMin(p);
    node.hi = node.hi.cwiseMax(p);
  }
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  int axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (points_[a][axis] != points_[b][axis]) {
                       return points_[a][axis] < points_[b][axis];
                     }
                     return a < b;
                   });
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<double> KdTree::knn_squared_distances(std::size_t self, std::size_t k) const {
  if (nodes_.empty() || k == 0) return {};
  const Eigen::Vector3f& query = points_[self];
  const Eigen::Vector3d q = query.cast<double>();
  std::priority_queue<double> best;  // max-heap of the k smallest so far

  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (best.size() == k && box_squared_distance(q, node.lo, node.hi) > best.top()) continue;
    if (node.left < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        if (idx == self) continue;
        const double d = squared_distance(query, points_[idx]);
        if (best.size() < k) {
          best.push(d);
        } else if (d < best.top()) {
          best.pop();
          best.push(d);
        }
      }
      continue;
    }
    // Visit the nearer child first.
    const double dl = box_squared_distance(q, nodes_[node.left].lo, nodes_[node.left].hi);
    const double dr = box_squared_distance(q, nodes_[node.right].lo, nodes_[node.right].hi);
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  std::vector<double> out(best.size());
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    *it = best.top();
    best.pop();
  }
  return out;
}

}  // namespace gs2pc
