#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <tuple>
#include <vector>

#include "streetfuse/geom.hpp"
#include "streetfuse/io.hpp"

namespace streetfuse {

struct ShapeSpec {
  enum class Type { Box, Ellipsoid, Ply };
  Type type = Type::Box;
  Vec3 size = Vec3(4.0, 2.0, 1.5);  // box edge lengths / ellipsoid radii
  std::filesystem::path ply_path;   // for Type::Ply
};

struct TrajectorySpec {
  enum class Type { ConstantVelocity, Circular, Keyframes };
  Type type = Type::ConstantVelocity;
  // constant velocity
  Vec3 start = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  // circular arc in the xy plane, heading along the tangent
  Vec3 center = Vec3::Zero();
  double radius = 10.0;
  double angular_velocity_deg = 1.0;  // per frame
  double start_angle_deg = 0.0;
  // keyframed poses, one per frame
  std::map<int, RigidPose> keyframes;
};

struct ObjectSpec {
  int id = 0;
  ShapeSpec shape;
  TrajectorySpec trajectory;
  int points_per_frame = 1000;
  Vec3 color = Vec3(0.6, 0.6, 0.6);
};

struct BackgroundSpec {
  int points_per_frame = 0;
  Vec3 lo = Vec3(-50, -50, 0);
  Vec3 hi = Vec3(50, 50, 0.2);
};

struct LidarSpec {
  Vec3 origin = Vec3::Zero();
  double dropout_base = 0.0;       // dropout probability at range 0
  double dropout_per_meter = 0.0;  // added per meter of range
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int frames = 2;
  std::vector<ObjectSpec> objects;
  CameraRig rig;
  BackgroundSpec background;
  LidarSpec lidar;
  int mask_dilation_px = 1;
  bool occlusion = false;  // z-buffer visibility test when rendering masks
};

// Ground truth for a generated scene: labeled LiDAR frames, exact projected
// masks, per-object trajectories, and reference shape samplings.
struct SceneTruth {
  SceneSpec spec;
  std::map<int, PointCloud> lidar_frames;
  std::map<int, std::vector<int>> lidar_labels;  // object id, or -1 for background
  std::map<int, std::map<int, RigidPose>> trajectories;  // object -> t -> pose
  std::map<int, std::vector<Vec3>> shape_reference;      // canonical samplings
  std::map<std::tuple<int, int, int>, Mask> masks;       // (object, camera, t)
};

// Builds the scene: samples each shape's surface per frame (fresh sampling,
// like a real sweep), moves it along its trajectory, applies range-dependent
// dropout, and renders masks by projecting the object's labeled points and
// dilating. Fully seeded; identical spec + seed gives identical output.
// Throws InvalidSpec with a field-level message on a bad spec.
SceneTruth generate_scene(const SceneSpec& spec);

// Distance from a canonical-frame point to the shape surface (analytic for
// box/ellipsoid, nearest reference sample for imported shapes).
double surface_distance(const ShapeSpec& shape, const std::vector<Vec3>& reference,
                        const Vec3& canonical_point);

// Degraded mask set: each (object, camera, frame) mask is dropped
// independently with probability drop_rate; survivors are jittered by a
// normal pixel offset with sigma pose_noise_px, then eroded by
// mask_erosion_px. Seeded.
std::map<std::tuple<int, int, int>, Mask> corrupt_tracks(
    const SceneTruth& truth, double drop_rate, double pose_noise_px, int mask_erosion_px,
    std::uint64_t seed);

// Writes the scene in the pipeline's input layout:
//   calibration.json, lidar/lidar_<t>.ply, masks/mask_<o>_<c>_<t>.pgm,
//   masks/index.json, gt/object_<id>/{trajectory.json, shape.ply}
void write_scene(const SceneTruth& truth, const std::filesystem::path& out_dir);

// Same, but with a replacement mask set (e.g. from corrupt_tracks).
void write_scene(const SceneTruth& truth, const std::filesystem::path& out_dir,
                 const std::map<std::tuple<int, int, int>, Mask>& masks);

SceneSpec load_scene_spec(const std::filesystem::path& path);
void save_scene_spec(const std::filesystem::path& path, const SceneSpec& spec);

// Pose along a trajectory at frame t.
RigidPose trajectory_pose(const TrajectorySpec& traj, int t);

}  // namespace streetfuse
