#include "streetfuse/lift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "streetfuse/errors.hpp"

namespace streetfuse {

PartialObjectCloud lift_mask(const PointCloud& lidar, int t, const Mask& mask,
                             const CameraModel& cam, int object_id, int camera_id) {
  if (mask.width != cam.width || mask.height != cam.height) {
    throw MaskSizeMismatch("mask is " + std::to_string(mask.width) + "x" +
                           std::to_string(mask.height) + " but camera expects " +
                           std::to_string(cam.width) + "x" + std::to_string(cam.height));
  }
  PartialObjectCloud out;
  out.object_id = object_id;
  out.camera_id = camera_id;
  out.t = t;
  for (std::size_t i = 0; i < lidar.size(); ++i) {
    auto uv = project(lidar.positions[i], cam);
    if (uv && mask.contains(uv->x(), uv->y())) {
      out.cloud.add(lidar.ids[i], lidar.positions[i]);
    }
  }
  return out;
}

PartialObjectCloud remove_outliers(const PartialObjectCloud& partial, const LiftParams& params) {
  const PointCloud& cloud = partial.cloud;
  if (cloud.empty()) throw EmptyCloud("remove_outliers: empty input cloud");

  const Vec3 c = cloud.centroid();
  const std::size_t n = cloud.size();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = (cloud.positions[i] - c).norm();

  double mu = std::accumulate(dist.begin(), dist.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double d : dist) var += (d - mu) * (d - mu);
  var /= static_cast<double>(n);
  const double threshold = mu + params.outlier_sigma * std::sqrt(var);

  std::vector<std::size_t> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dist[i] <= threshold) keep.push_back(i);
  }

  const std::size_t floor_count = std::min<std::size_t>(params.min_points_floor, n);
  if (keep.size() < floor_count) {
    // keep the nearest floor_count points instead
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    order.resize(floor_count);
    std::sort(order.begin(), order.end());
    keep = std::move(order);
  }

  PartialObjectCloud out;
  out.object_id = partial.object_id;
  out.camera_id = partial.camera_id;
  out.t = partial.t;
  for (std::size_t i : keep) out.cloud.add(cloud.ids[i], cloud.positions[i]);
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  }
};

}  // namespace

std::vector<std::vector<TrackKey>> associate_views(const std::vector<PartialObjectCloud>& partials,
                                                   const LiftParams& params) {
  // Collect track keys in deterministic order.
  std::set<TrackKey> key_set;
  for (const auto& p : partials) key_set.insert({p.object_id, p.camera_id});
  std::vector<TrackKey> keys(key_set.begin(), key_set.end());
  std::map<TrackKey, int> key_index;
  for (std::size_t i = 0; i < keys.size(); ++i) key_index[keys[i]] = static_cast<int>(i);

  // Sorted id sets per (track, t).
  std::map<int, std::map<int, std::vector<PointId>>> ids_by_time;  // t -> track -> ids
  for (const auto& p : partials) {
    auto& ids = ids_by_time[p.t][key_index[{p.object_id, p.camera_id}]];
    ids.insert(ids.end(), p.cloud.ids.begin(), p.cloud.ids.end());
  }

  UnionFind uf(keys.size());
  for (auto& [t, tracks] : ids_by_time) {
    for (auto& [idx, ids] : tracks) std::sort(ids.begin(), ids.end());
    for (auto a = tracks.begin(); a != tracks.end(); ++a) {
      for (auto b = std::next(a); b != tracks.end(); ++b) {
        std::size_t shared = 0;
        auto ia = a->second.begin();
        auto ib = b->second.begin();
        while (ia != a->second.end() && ib != b->second.end()) {
          if (*ia < *ib) {
            ++ia;
          } else if (*ib < *ia) {
            ++ib;
          } else {
            ++shared;
            ++ia;
            ++ib;
          }
        }
        if (shared > static_cast<std::size_t>(params.min_shared_points)) {
          uf.unite(a->first, b->first);
        }
      }
    }
  }

  std::map<int, std::vector<TrackKey>> groups;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    groups[uf.find(static_cast<int>(i))].push_back(keys[i]);
  }
  std::vector<std::vector<TrackKey>> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

PointCloud merge_group_frame(const std::vector<const PartialObjectCloud*>& parts) {
  PointCloud merged;
  std::set<PointId> seen;
  for (const auto* p : parts) {
    for (std::size_t i = 0; i < p->cloud.size(); ++i) {
      if (seen.insert(p->cloud.ids[i]).second) {
        merged.add(p->cloud.ids[i], p->cloud.positions[i]);
      }
    }
  }
  return merged;
}

}  // namespace streetfuse
