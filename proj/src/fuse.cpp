#include "streetfuse/fuse.hpp"

#include <cmath>

#include "streetfuse/errors.hpp"
#include "streetfuse/spatial.hpp"

namespace streetfuse {

IcpResult icp_align(const PointCloud& source, const PointCloud& target, const RigidPose& init,
                    const IcpParams& params) {
  if (source.size() < 10 || target.size() < 10) {
    throw TooFewPoints("icp_align needs >= 10 points in source and target (" +
                       std::to_string(source.size()) + " / " + std::to_string(target.size()) +
                       ")");
  }

  KdTree3 tree(target.positions);
  RigidPose pose = init;
  IcpResult result;

  std::vector<Vec3> src_pts, dst_pts;
  src_pts.reserve(source.size());
  dst_pts.reserve(source.size());

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    src_pts.clear();
    dst_pts.clear();
    for (const auto& p : source.positions) {
      Vec3 moved = pose.apply(p);
      auto hit = tree.nearest(moved, params.correspondence_radius);
      if (hit.index >= 0) {
        src_pts.push_back(moved);
        dst_pts.push_back(target.positions[hit.index]);
      }
    }
    if (src_pts.size() < 3) {
      throw DegenerateCorrespondences("icp_align: only " + std::to_string(src_pts.size()) +
                                      " inlier pairs");
    }
    RigidPose delta = kabsch(src_pts, dst_pts);
    pose = delta.compose(pose).orthonormalized();
    result.iterations = iter + 1;
    if (delta.translation.norm() < params.translation_epsilon &&
        rotation_angle_rad(delta.rotation) < params.rotation_epsilon) {
      break;
    }
  }

  // residual over the final correspondence set
  double sq_sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& p : source.positions) {
    Vec3 moved = pose.apply(p);
    auto hit = tree.nearest(moved, params.correspondence_radius);
    if (hit.index >= 0) {
      sq_sum += hit.dist_sq;
      ++pairs;
    }
  }
  result.rms_residual = pairs > 0 ? std::sqrt(sq_sum / static_cast<double>(pairs)) : 0.0;
  result.pose = pose;
  result.overlap = overlap_ratio(target, transform_cloud(source, pose), params.overlap_radius);
  return result;
}

double overlap_ratio(const PointCloud& canonical, const PointCloud& aligned_partial,
                     double radius) {
  if (canonical.empty() || aligned_partial.empty()) {
    throw EmptyCloud("overlap_ratio: empty cloud");
  }
  KdTree3 tree(canonical.positions);
  std::size_t hits = 0;
  for (const auto& p : aligned_partial.positions) {
    if (tree.has_within(p, radius)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(aligned_partial.size());
}

std::vector<TrajectoryEntry> CanonicalObject::trajectory() const {
  std::vector<TrajectoryEntry> out;
  for (const auto& [t, st] : status) {
    TrajectoryEntry e;
    e.t = t;
    e.status = st;
    auto it = poses.find(t);
    if (it != poses.end()) e.pose = it->second;
    out.push_back(e);
  }
  return out;
}

CanonicalObject fuse_object(int object_id, const std::vector<FramePartial>& partials,
                            const FuseParams& params) {
  CanonicalObject obj;
  obj.object_id = object_id;

  bool any_nonempty = false;
  for (const auto& fp : partials) {
    if (!fp.cloud.empty()) any_nonempty = true;
  }
  if (!any_nonempty) throw NoValidFrames("fuse_object: every frame is empty");

  VoxelSet occupied(params.dedup_voxel);
  PointId next_id = 0;
  RigidPose last_pose = RigidPose::identity();
  bool initialized = false;

  // dedup applies to later merges only; the anchor frame is kept wholesale
  auto merge_into_canonical = [&](const PointCloud& canonical_frame_cloud, bool dedup) {
    for (const auto& p : canonical_frame_cloud.positions) {
      bool fresh = occupied.insert(p);
      if (fresh || !dedup) obj.canonical_cloud.add(next_id++, p);
    }
  };

  for (const auto& fp : partials) {
    if (fp.cloud.empty()) {
      obj.status[fp.t] = FrameStatus::Unobserved;
      continue;
    }
    if (fp.cloud.size() < static_cast<std::size_t>(params.min_frame_points)) {
      obj.status[fp.t] = FrameStatus::Rejected;
      continue;
    }
    if (!initialized) {
      // first usable frame anchors the canonical frame
      merge_into_canonical(fp.cloud, false);
      obj.poses[fp.t] = RigidPose::identity();
      obj.status[fp.t] = FrameStatus::Fused;
      last_pose = RigidPose::identity();
      initialized = true;
      continue;
    }

    IcpResult res;
    try {
      // align the world-frame partial onto the canonical model; the recorded
      // object pose is the inverse (canonical -> world)
      res = icp_align(fp.cloud, obj.canonical_cloud, last_pose.inverse(), params.icp);
    } catch (const DegenerateCorrespondences&) {
      obj.status[fp.t] = FrameStatus::Rejected;
      continue;
    } catch (const TooFewPoints&) {
      obj.status[fp.t] = FrameStatus::Rejected;
      continue;
    }

    if (res.overlap < params.pose_only_threshold) {
      obj.status[fp.t] = FrameStatus::Rejected;
      continue;
    }
    RigidPose object_pose = res.pose.inverse().orthonormalized();
    obj.poses[fp.t] = object_pose;
    last_pose = object_pose;
    if (res.overlap > params.fuse_threshold) {
      merge_into_canonical(transform_cloud(fp.cloud, res.pose), true);
      obj.status[fp.t] = FrameStatus::Fused;
    } else {
      obj.status[fp.t] = FrameStatus::PoseOnly;
    }
  }

  return obj;
}

}  // namespace streetfuse
