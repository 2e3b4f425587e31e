#include "gma3d/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <utility>

#include "gma3d/errors.hpp"

namespace gma3d::spatial {

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw ParameterError("PointCloud: needs at least one point");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    for (double c : points_[i]) {
      if (!std::isfinite(c)) {
        throw NumericalError("PointCloud: non-finite coordinate at point " + std::to_string(i), i);
      }
    }
  }
}

PointCloud PointCloud::from_array(const numkern::DenseArray& a) {
  if (a.rank() != 2 || a.cols() != 3) {
    throw ShapeError("PointCloud: expected N×3, got " + numkern::shape_string(a.shape()));
  }
  std::vector<Vec3> pts(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) pts[i] = {a(i, 0), a(i, 1), a(i, 2)};
  return PointCloud(std::move(pts));
}

numkern::DenseArray PointCloud::to_array() const {
  std::vector<double> data;
  data.reserve(points_.size() * 3);
  for (const auto& p : points_) data.insert(data.end(), p.begin(), p.end());
  return numkern::DenseArray({points_.size(), 3}, std::move(data));
}

KdTree::KdTree(const PointCloud& cloud, std::size_t leaf_size)
    : points_(cloud.points().begin(), cloud.points().end()),
      order_(cloud.size()),
      leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * (points_.size() / leaf_size_ + 1));
  build(0, order_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points_[order_[i]][a]);
      hi[a] = std::max(hi[a], points_[order_[i]][a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t x, std::size_t y) {
                     const double cx = points_[x][axis], cy = points_[y][axis];
                     return cx < cy || (cx == cy && x < y);
                   });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

std::vector<std::size_t> KdTree::nearest(const Vec3& query, std::size_t k,
                                         std::optional<std::size_t> exclude) const {
  using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)
  std::priority_queue<Candidate> heap;                 // top = worst kept candidate
  if (k == 0) return {};

  auto offer = [&](std::size_t idx) {
    if (exclude && *exclude == idx) return;
    const Candidate c{squared_distance(query, points_[idx]), idx};
    if (heap.size() < k) {
      heap.push(c);
    } else if (c < heap.top()) {
      heap.pop();
      heap.push(c);
    }
  };

  // Far children are visited unless strictly farther than the current
  // worst candidate; equal distances can still win on index.
  auto search = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) offer(order_[i]);
      return;
    }
    const double diff = query[node.axis] - node.split;
    const std::size_t near = diff <= 0.0 ? node.left : node.right;
    const std::size_t far = diff <= 0.0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
  };
  search(search, 0);

  std::vector<Candidate> found;
  found.reserve(heap.size());
  while (!heap.empty()) {
    found.push_back(heap.top());
    heap.pop();
  }
  std::reverse(found.begin(), found.end());
  std::vector<std::size_t> out(found.size());
  std::transform(found.begin(), found.end(), out.begin(), [](const Candidate& c) { return c.second; });
  return out;
}

NeighborIndex knn(const PointCloud& cloud, std::size_t k, bool include_self) {
  const std::size_t n = cloud.size();
  const std::size_t available = include_self ? n : n - 1;
  if (k == 0 || k > available) {
    throw ParameterError("knn: k=" + std::to_string(k) + " but only " + std::to_string(available) +
                         " candidate neighbors per point (N=" + std::to_string(n) + ")");
  }
  const KdTree tree(cloud);
  NeighborIndex out;
  out.k = k;
  out.indices.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = tree.nearest(cloud[i], k, include_self ? std::nullopt : std::optional(i));
    out.indices.insert(out.indices.end(), row.begin(), row.end());
  }
  return out;
}

std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t m, std::size_t seed_index) {
  const std::size_t n = cloud.size();
  if (m == 0 || m > n) {
    throw ParameterError("fps: m=" + std::to_string(m) + " with N=" + std::to_string(n));
  }
  if (seed_index >= n) throw ParameterError("fps: seed index out of range");

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> picked;
  picked.reserve(m);
  std::size_t current = seed_index;
  for (;;) {
    picked.push_back(current);
    taken[current] = true;
    if (picked.size() == m) break;
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d2[i] = std::min(min_d2[i], squared_distance(cloud[i], cloud[current]));
      if (best == n || min_d2[i] > min_d2[best]) best = i;
    }
    current = best;
  }
  return picked;
}

}  // namespace gma3d::spatial
