#pragma once

#include <map>
#include <vector>

#include "streetfuse/geom.hpp"
#include "streetfuse/io.hpp"

namespace streetfuse {

// Per-object, per-camera track of binary instance masks from an upstream 2D
// tracker, keyed by time index.
struct MaskTrack {
  int object_id = 0;
  int camera_id = 0;
  std::map<int, Mask> frames;
};

// A LiDAR frame's points that fall inside one object mask in one camera view.
// Point ids are inherited from the source frame, so partials from different
// cameras at the same time step are comparable by id.
struct PartialObjectCloud {
  int object_id = 0;
  int camera_id = 0;
  int t = 0;
  PointCloud cloud;
};

struct LiftParams {
  double outlier_sigma = 2.0;  // keep points within mu + sigma_k * sigma of the centroid
  int min_points_floor = 10;   // never drop below this many survivors
  int min_shared_points = 50;  // strict ">" for cross-view association
};

// Selects the LiDAR points whose projection lands on a set mask pixel.
// Throws MaskSizeMismatch when the mask does not match the camera image size.
PartialObjectCloud lift_mask(const PointCloud& lidar, int t, const Mask& mask,
                             const CameraModel& cam, int object_id, int camera_id);

// Drops points whose distance to the centroid exceeds mu + k*sigma of the
// distance distribution. Keeps at least `min_points_floor` points (the
// nearest ones) when the filter would go below that. Throws EmptyCloud on an
// empty input.
PartialObjectCloud remove_outliers(const PartialObjectCloud& partial,
                                   const LiftParams& params = {});

// Key identifying one per-camera track.
struct TrackKey {
  int object_id = 0;
  int camera_id = 0;

  bool operator<(const TrackKey& o) const {
    return object_id != o.object_id ? object_id < o.object_id : camera_id < o.camera_id;
  }
  bool operator==(const TrackKey& o) const {
    return object_id == o.object_id && camera_id == o.camera_id;
  }
};

// Groups per-camera tracks that observe the same physical object: two tracks
// merge when their partials at some common time step share strictly more than
// `min_shared_points` point ids, and grouping is the transitive closure.
// The result is a partition of the track keys, deterministic in content and
// order (each group sorted, groups ordered by first member).
std::vector<std::vector<TrackKey>> associate_views(const std::vector<PartialObjectCloud>& partials,
                                                   const LiftParams& params = {});

// Merges all partials of one group at one time step into a single cloud,
// deduplicating by point id.
PointCloud merge_group_frame(const std::vector<const PartialObjectCloud*>& parts);

}  // namespace streetfuse
