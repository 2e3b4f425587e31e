#pragma once

// Exact neighbor queries over 3-D point sets.
//
// Distances are compared as squared Euclidean norms computed in one fixed
// expression, and ties are broken by the lower point index, so the kd-tree
// returns exactly what an exhaustive scan returns.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gma3d/numkern/dense_array.hpp"

namespace gma3d::spatial {

using Vec3 = std::array<double, 3>;

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// One frame of points, in meters. Never empty; all coordinates finite.
class PointCloud {
 public:
  explicit PointCloud(std::vector<Vec3> points);

  // From/to an N×3 array.
  static PointCloud from_array(const numkern::DenseArray& a);
  numkern::DenseArray to_array() const;

  std::size_t size() const noexcept { return points_.size(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Vec3> points() const noexcept { return points_; }

 private:
  std::vector<Vec3> points_;
};

// k neighbors per point, nearest first.
struct NeighborIndex {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // row-major, size() * k entries

  std::size_t size() const noexcept { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::size_t> row(std::size_t i) const {
    return std::span<const std::size_t>(indices).subspan(i * k, k);
  }
};

class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud, std::size_t leaf_size = 8);

  // The k nearest points to `query`, ascending by (distance, index).
  // `exclude` is skipped (used to drop the query point itself).
  std::vector<std::size_t> nearest(const Vec3& query, std::size_t k,
                                   std::optional<std::size_t> exclude = std::nullopt) const;

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

// Exact k-NN of every point within its own cloud. Self is excluded unless
// include_self is set. Throws ParameterError if k exceeds the available
// candidates (N-1, or N with include_self) or k == 0.
NeighborIndex knn(const PointCloud& cloud, std::size_t k, bool include_self = false);

// Greedy farthest point sampling from seed_index. Each pick maximizes the
// distance to the already selected set; ties go to the lower index.
// Throws ParameterError if m > N, m == 0 or seed_index >= N.
std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t m, std::size_t seed_index);

}  // namespace gma3d::spatial
