#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "streetfuse/geom.hpp"

namespace streetfuse {

// Minimal 3D kd-tree over a fixed point set. Build and queries are fully
// deterministic: splits use nth_element with index tie-breaking, and nearest
// neighbor ties resolve to the smaller index.
class KdTree3 {
 public:
  KdTree3() = default;

  explicit KdTree3(const std::vector<Vec3>& points) { build(points); }

  void build(const std::vector<Vec3>& points) {
    points_ = points;
    indices_.resize(points.size());
    std::iota(indices_.begin(), indices_.end(), 0);
    nodes_.clear();
    nodes_.reserve(points.size());
    root_ = points.empty() ? -1 : build_range(0, static_cast<int>(points.size()), 0);
  }

  std::size_t size() const { return points_.size(); }

  struct Hit {
    int index = -1;
    double dist_sq = std::numeric_limits<double>::infinity();
  };

  // Nearest neighbor; optional max_dist bounds the search radius.
  Hit nearest(const Vec3& q, double max_dist = std::numeric_limits<double>::infinity()) const {
    Hit best;
    best.dist_sq = max_dist * max_dist;
    bool found = false;
    nearest_rec(root_, q, best, found);
    if (!found) return Hit{};
    return best;
  }

  // True if any point lies within `radius` of q.
  bool has_within(const Vec3& q, double radius) const {
    return within_rec(root_, q, radius * radius);
  }

 private:
  struct Node {
    int index;
    int axis;
    int left;
    int right;
  };

  int build_range(int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    int axis = depth % 3;
    int mid = (lo + hi) / 2;
    std::nth_element(indices_.begin() + lo, indices_.begin() + mid, indices_.begin() + hi,
                     [&](int a, int b) {
                       double pa = points_[a][axis], pb = points_[b][axis];
                       if (pa != pb) return pa < pb;
                       return a < b;
                     });
    Node node;
    node.index = indices_[mid];
    node.axis = axis;
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int left = build_range(lo, mid, depth + 1);
    int right = build_range(mid + 1, hi, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void nearest_rec(int node_id, const Vec3& q, Hit& best, bool& found) const {
    if (node_id < 0) return;
    const Node& node = nodes_[node_id];
    const Vec3& p = points_[node.index];
    double d2 = (p - q).squaredNorm();
    if (d2 < best.dist_sq || (d2 == best.dist_sq && (!found || node.index < best.index))) {
      best.index = node.index;
      best.dist_sq = d2;
      found = true;
    }
    double delta = q[node.axis] - p[node.axis];
    int near = delta < 0.0 ? node.left : node.right;
    int far = delta < 0.0 ? node.right : node.left;
    nearest_rec(near, q, best, found);
    if (delta * delta <= best.dist_sq) nearest_rec(far, q, best, found);
  }

  bool within_rec(int node_id, const Vec3& q, double r2) const {
    if (node_id < 0) return false;
    const Node& node = nodes_[node_id];
    const Vec3& p = points_[node.index];
    if ((p - q).squaredNorm() <= r2) return true;
    double delta = q[node.axis] - p[node.axis];
    int near = delta < 0.0 ? node.left : node.right;
    int far = delta < 0.0 ? node.right : node.left;
    if (within_rec(near, q, r2)) return true;
    if (delta * delta <= r2) return within_rec(far, q, r2);
    return false;
  }

  std::vector<Vec3> points_;
  std::vector<int> indices_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Occupancy set on a uniform voxel grid, used to deduplicate merged points:
// a point whose voxel is already occupied is considered a duplicate.
class VoxelSet {
 public:
  explicit VoxelSet(double voxel_size) : voxel_(voxel_size) {}

  // Inserts the point's voxel. Returns true if the voxel was free.
  bool insert(const Vec3& p) { return cells_.insert(key(p)).second; }

  bool contains(const Vec3& p) const { return cells_.count(key(p)) > 0; }

  std::size_t size() const { return cells_.size(); }

 private:
  std::uint64_t key(const Vec3& p) const {
    auto cell = [&](double v) {
      return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(v / voxel_)) &
                                        0x1FFFFF);
    };
    return (cell(p.x()) << 42) | (cell(p.y()) << 21) | cell(p.z());
  }

  double voxel_;
  std::unordered_set<std::uint64_t> cells_;
};

}  // namespace streetfuse
