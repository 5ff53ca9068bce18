#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <vector>

namespace streetfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PointId = std::int64_t;

// Rigid SE(3) transform, stored as rotation matrix + translation.
// Applying the pose maps a point p to rotation * p + translation.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  // this ∘ other: apply `other` first, then `this`.
  RigidPose compose(const RigidPose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidPose inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  // Projects the rotation back onto SO(3) via polar decomposition. Call after
  // long composition chains to keep the orthonormality invariant.
  RigidPose orthonormalized() const;
};

// Geodesic angle between two rotations, in radians.
double rotation_angle_rad(const Mat3& a, const Mat3& b);

// Same, in degrees. Result lies in [0, 180].
double rotation_angle_deg(const RigidPose& a, const RigidPose& b);

// Angle of a single rotation matrix relative to identity, radians.
double rotation_angle_rad(const Mat3& r);

// Pinhole camera: intrinsics K, extrinsics mapping world -> camera, and the
// image size in pixels. Pixel convention: (u, v) with origin at the top-left
// corner, u rightward, v downward. A projected point is considered inside the
// image if its rounded-to-nearest pixel lies within bounds.
struct CameraModel {
  Mat3 intrinsics = Mat3::Identity();
  RigidPose extrinsics;  // world -> camera
  int width = 0;
  int height = 0;

  static CameraModel simple(double f, double cx, double cy, int w, int h,
                            const RigidPose& world_to_camera = RigidPose::identity());
};

// Projects a world point through the camera. Returns the continuous pixel
// coordinates when the point is in front of the camera and its rounded pixel
// lies inside the image; absent otherwise.
std::optional<Eigen::Vector2d> project(const Vec3& point, const CameraModel& cam);

// Depth of a world point along the camera z-axis.
double camera_depth(const Vec3& point, const CameraModel& cam);

// Inverse of project for a given depth along the camera z-axis.
Vec3 unproject(const Eigen::Vector2d& pixel, double depth, const CameraModel& cam);

// Point cloud with stable per-point identifiers. Ids are unique within a
// cloud; across frames the id spaces are independent.
struct PointCloud {
  std::vector<PointId> ids;
  std::vector<Vec3> positions;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void add(PointId id, const Vec3& p) {
    ids.push_back(id);
    positions.push_back(p);
  }

  Vec3 centroid() const;
};

// Applies a rigid pose to every point; ids are preserved.
PointCloud transform_cloud(const PointCloud& cloud, const RigidPose& pose);

// Best rigid transform (least squares) mapping src[i] -> dst[i], via
// centroid-aligned SVD with the determinant sign fix. Requires >= 3 pairs.
RigidPose kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

}  // namespace streetfuse
