#pragma once

#include <map>
#include <vector>

#include "streetfuse/geom.hpp"
#include "streetfuse/io.hpp"

namespace streetfuse {

struct IcpParams {
  double correspondence_radius = 1.0;  // meters; pairs beyond this are rejected
  int max_iterations = 50;
  double translation_epsilon = 1e-4;  // meters
  double rotation_epsilon = 1e-3;     // radians
  double overlap_radius = 0.20;       // meters, for the overlap diagnostic
};

struct IcpResult {
  RigidPose pose;            // maps source into the target frame
  double rms_residual = 0.0;  // meters, over the final inlier pairs
  int iterations = 0;
  double overlap = 0.0;  // fraction of aligned source points near a target point
};

// Point-to-point ICP: alternate nearest-neighbor correspondence under the
// current pose with a closed-form SVD update, rejecting pairs beyond the
// correspondence radius. Stops when the pose delta falls below the epsilons
// or after max_iterations. Throws TooFewPoints when either cloud has fewer
// than 10 points and DegenerateCorrespondences when fewer than 3 inlier pairs
// survive.
IcpResult icp_align(const PointCloud& source, const PointCloud& target, const RigidPose& init,
                    const IcpParams& params = {});

// Fraction of aligned_partial points that have a canonical point within
// `radius`. Both clouds must be non-empty and expressed in the same frame.
double overlap_ratio(const PointCloud& canonical, const PointCloud& aligned_partial,
                     double radius = 0.20);

// Fused object: canonical-space cloud plus per-frame poses (canonical ->
// world) and status flags. The first fused frame anchors the canonical frame,
// so its pose is the identity.
struct CanonicalObject {
  int object_id = 0;
  PointCloud canonical_cloud;
  std::map<int, RigidPose> poses;
  std::map<int, FrameStatus> status;

  std::vector<TrajectoryEntry> trajectory() const;
};

struct FuseParams {
  IcpParams icp;
  double fuse_threshold = 0.30;       // overlap strictly above: merge points
  double pose_only_threshold = 0.10;  // overlap in [pose_only, fuse]: pose only
  double dedup_voxel = 0.05;          // meters, voxel-grid dedup on merge
  int min_frame_points = 10;          // frames below this are rejected outright
};

// One merged per-frame observation of an object.
struct FramePartial {
  int t = 0;
  PointCloud cloud;
};

// Incremental canonical reconstruction. Initializes the canonical cloud from
// the first usable frame, then aligns each later frame with ICP (initialized
// from the last recorded pose) and gates on the overlap ratio:
//   overlap > fuse_threshold            -> pose recorded, points merged (Fused)
//   overlap in [pose_only, fuse]        -> pose recorded only (PoseOnly)
//   overlap < pose_only_threshold       -> frame discarded (Rejected)
// Empty frames are Unobserved. Throws NoValidFrames when every frame is
// empty. Merging deduplicates on a voxel grid.
CanonicalObject fuse_object(int object_id, const std::vector<FramePartial>& partials,
                            const FuseParams& params = {});

}  // namespace streetfuse
