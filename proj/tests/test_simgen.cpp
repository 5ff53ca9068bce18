#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "streetfuse/errors.hpp"
#include "streetfuse/simgen.hpp"
#include "test_util.hpp"

using namespace streetfuse;
namespace fs = std::filesystem;

namespace {

CameraRig one_camera_rig(const Vec3& eye, const Vec3& target, int w = 320, int h = 240,
                         double f = 300.0, int camera_id = 0) {
  // look-at: camera z along the view direction, v axis pointing down
  Vec3 forward = (target - eye).normalized();
  Vec3 up(0, 0, 1);
  Vec3 right = forward.cross(up).normalized();
  Vec3 down = forward.cross(right).normalized();
  RigidPose pose;
  pose.rotation.row(0) = right;
  pose.rotation.row(1) = down;
  pose.rotation.row(2) = forward;
  pose.translation = -(pose.rotation * eye);

  CameraRig rig;
  CameraRig::Entry e;
  e.camera_id = camera_id;
  e.intrinsics << f, 0, w / 2.0, 0, f, h / 2.0, 0, 0, 1;
  e.width = w;
  e.height = h;
  e.fixed_extrinsics = pose;
  rig.cameras.push_back(e);
  return rig;
}

SceneSpec static_box_scene(int frames = 5) {
  SceneSpec spec;
  spec.seed = 42;
  spec.frames = frames;
  ObjectSpec obj;
  obj.id = 1;
  obj.shape.type = ShapeSpec::Type::Box;
  obj.shape.size = Vec3(4, 2, 1.5);
  obj.trajectory.type = TrajectorySpec::Type::ConstantVelocity;
  obj.trajectory.start = Vec3(0, 0, 0.75);
  obj.trajectory.velocity = Vec3::Zero();
  obj.points_per_frame = 500;
  spec.objects.push_back(obj);
  spec.rig = one_camera_rig(Vec3(12, 0, 4), Vec3(0, 0, 0.75));
  return spec;
}

}  // namespace

TEST_CASE("static box: identity trajectory and identical masks across frames") {
  SceneTruth truth = generate_scene(static_box_scene());
  for (int t = 0; t < 5; ++t) {
    const RigidPose& pose = truth.trajectories.at(1).at(t);
    CHECK((pose.rotation - Mat3::Identity()).norm() == 0.0);
    CHECK((pose.translation - Vec3(0, 0, 0.75)).norm() == 0.0);
  }
  const Mask& first = truth.masks.at({1, 0, 0});
  CHECK_FALSE(first.empty_mask());
  for (int t = 1; t < 5; ++t) {
    CHECK(truth.masks.at({1, 0, t}).data == first.data);
  }
}

TEST_CASE("constant velocity trajectory translations are exact") {
  SceneSpec spec = static_box_scene(6);
  spec.objects[0].trajectory.velocity = Vec3(0.5, 0, 0);
  SceneTruth truth = generate_scene(spec);
  for (int t = 0; t < 6; ++t) {
    Vec3 expected = Vec3(0, 0, 0.75) + Vec3(0.5, 0, 0) * static_cast<double>(t);
    CHECK((truth.trajectories.at(1).at(t).translation - expected).norm() == 0.0);
  }
}

TEST_CASE("circular trajectory keeps radius and heads along the tangent") {
  SceneSpec spec = static_box_scene(10);
  auto& traj = spec.objects[0].trajectory;
  traj.type = TrajectorySpec::Type::Circular;
  traj.center = Vec3(0, 0, 0.75);
  traj.radius = 8.0;
  traj.angular_velocity_deg = 3.0;
  traj.start_angle_deg = 30.0;
  SceneTruth truth = generate_scene(spec);
  for (int t = 0; t < 10; ++t) {
    const RigidPose& pose = truth.trajectories.at(1).at(t);
    CHECK(((pose.translation - traj.center).norm()) == doctest::Approx(8.0));
    // the rotated +x axis must be tangent, i.e. orthogonal to the radius
    Vec3 heading = pose.rotation.col(0);
    Vec3 radial = (pose.translation - traj.center).normalized();
    CHECK(std::abs(heading.dot(radial)) < 1e-12);
  }
}

TEST_CASE("keyframed trajectories pass poses through and demand full coverage") {
  SceneSpec spec = static_box_scene(3);
  auto& traj = spec.objects[0].trajectory;
  traj.type = TrajectorySpec::Type::Keyframes;
  std::mt19937_64 rng(19);
  for (int t = 0; t < 3; ++t) traj.keyframes[t] = testutil::random_pose(rng, 0.3, 2.0);
  SceneTruth truth = generate_scene(spec);
  for (int t = 0; t < 3; ++t) {
    CHECK((truth.trajectories.at(1).at(t).rotation - traj.keyframes[t].rotation).norm() == 0.0);
    CHECK((truth.trajectories.at(1).at(t).translation - traj.keyframes[t].translation).norm() ==
          0.0);
  }

  traj.keyframes.erase(1);
  CHECK_THROWS_AS(generate_scene(spec), InvalidSpec);
}

TEST_CASE("labels stay consistent when two objects cross") {
  SceneSpec spec = static_box_scene(9);
  spec.objects[0].trajectory.start = Vec3(-4, 0, 0.75);
  spec.objects[0].trajectory.velocity = Vec3(1.0, 0, 0);
  ObjectSpec second = spec.objects[0];
  second.id = 2;
  second.shape.size = Vec3(3, 1.5, 1.2);
  second.trajectory.start = Vec3(4, 0.5, 0.6);
  second.trajectory.velocity = Vec3(-1.0, 0, 0);
  spec.objects.push_back(second);

  SceneTruth truth = generate_scene(spec);
  for (int t = 0; t < 9; ++t) {
    const PointCloud& frame = truth.lidar_frames.at(t);
    const auto& labels = truth.lidar_labels.at(t);
    REQUIRE(labels.size() == frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
      const int label = labels[i];
      REQUIRE(label >= 1);
      const auto& obj = spec.objects[static_cast<std::size_t>(label - 1)];
      // the point, moved back to the object's canonical frame, must lie on
      // that object's surface
      Vec3 canonical = truth.trajectories.at(label).at(t).inverse().apply(frame.positions[i]);
      CHECK(surface_distance(obj.shape, truth.shape_reference.at(label), canonical) < 1e-9);
    }
  }
}

TEST_CASE("masks equal the dilated projection of the labeled points") {
  SceneSpec spec = static_box_scene(3);
  spec.mask_dilation_px = 1;
  SceneTruth truth = generate_scene(spec);
  CameraModel cam = spec.rig.camera_at(0, 0);

  Mask raw(cam.width, cam.height);
  const PointCloud& frame = truth.lidar_frames.at(0);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (truth.lidar_labels.at(0)[i] != 1) continue;
    auto uv = project(frame.positions[i], cam);
    if (uv) raw.set(static_cast<int>(std::llround(uv->x())),
                    static_cast<int>(std::llround(uv->y())));
  }
  Mask expected = dilate(raw, 1);
  CHECK(truth.masks.at({1, 0, 0}).data == expected.data);
}

TEST_CASE("generation is reproducible bit for bit") {
  SceneSpec spec = static_box_scene(4);
  spec.objects[0].trajectory.velocity = Vec3(0.3, 0.1, 0);
  spec.background.points_per_frame = 200;
  spec.background.lo = Vec3(-20, -20, 0);
  spec.background.hi = Vec3(20, 20, 0.2);
  spec.lidar.dropout_base = 0.1;

  SceneTruth a = generate_scene(spec);
  SceneTruth b = generate_scene(spec);
  for (int t = 0; t < 4; ++t) {
    REQUIRE(a.lidar_frames.at(t).size() == b.lidar_frames.at(t).size());
    for (std::size_t i = 0; i < a.lidar_frames.at(t).size(); ++i) {
      CHECK(a.lidar_frames.at(t).positions[i] == b.lidar_frames.at(t).positions[i]);
    }
    CHECK(a.masks.at({1, 0, t}).data == b.masks.at({1, 0, t}).data);
  }

  SceneSpec other = spec;
  other.seed = 43;
  SceneTruth c = generate_scene(other);
  bool any_diff = c.lidar_frames.at(0).size() != a.lidar_frames.at(0).size();
  if (!any_diff) {
    for (std::size_t i = 0; i < a.lidar_frames.at(0).size() && !any_diff; ++i) {
      any_diff = a.lidar_frames.at(0).positions[i] != c.lidar_frames.at(0).positions[i];
    }
  }
  CHECK(any_diff);
}

TEST_CASE("invalid specs are rejected with field-level messages") {
  SceneSpec no_objects = static_box_scene();
  no_objects.objects.clear();
  CHECK_THROWS_WITH_AS(generate_scene(no_objects), "objects: at least one object required",
                       InvalidSpec);

  SceneSpec one_frame = static_box_scene(1);
  CHECK_THROWS_AS(generate_scene(one_frame), InvalidSpec);

  SceneSpec no_cams = static_box_scene();
  no_cams.rig.cameras.clear();
  CHECK_THROWS_AS(generate_scene(no_cams), InvalidSpec);
}

TEST_CASE("corrupt_tracks: no-op at drop_rate 0 and empirical drop fraction in 3-sigma bounds") {
  SceneSpec spec = static_box_scene(40);
  SceneTruth truth = generate_scene(spec);

  auto untouched = corrupt_tracks(truth, 0.0, 0.0, 0, 7);
  REQUIRE(untouched.size() == truth.masks.size());
  for (const auto& [key, mask] : untouched) {
    CHECK(mask.data == truth.masks.at(key).data);
  }

  // many masks: replicate the scene across objects for a bigger sample
  SceneSpec big = static_box_scene(40);
  for (int extra = 2; extra <= 10; ++extra) {
    ObjectSpec obj = big.objects[0];
    obj.id = extra;
    obj.trajectory.start = Vec3(0, -10.0 + 2.0 * extra, 0.75);
    big.objects.push_back(obj);
  }
  SceneTruth big_truth = generate_scene(big);
  const double p = 0.9;
  auto degraded = corrupt_tracks(big_truth, p, 0.0, 0, 11);
  const double n = static_cast<double>(big_truth.masks.size());
  const double dropped = n - static_cast<double>(degraded.size());
  const double sigma = std::sqrt(p * (1.0 - p) * n);
  CHECK(std::abs(dropped - p * n) <= 3.0 * sigma);
}

TEST_CASE("corrupt_tracks: erosion wider than the mask empties it") {
  SceneSpec spec = static_box_scene(3);
  SceneTruth truth = generate_scene(spec);
  auto degraded = corrupt_tracks(truth, 0.0, 0.0, 200, 3);
  for (const auto& [key, mask] : degraded) CHECK(mask.empty_mask());
}

TEST_CASE("write_scene emits the pipeline input layout") {
  SceneSpec spec = static_box_scene(3);
  SceneTruth truth = generate_scene(spec);
  fs::path dir = fs::temp_directory_path() / "streetfuse_test_scene";
  fs::remove_all(dir);
  write_scene(truth, dir);

  CHECK(fs::exists(dir / "calibration.json"));
  CHECK(fs::exists(dir / "lidar" / "lidar_0.ply"));
  CHECK(fs::exists(dir / "lidar" / "lidar_2.ply"));
  CHECK(fs::exists(dir / "masks" / "mask_1_0_0.pgm"));
  CHECK(fs::exists(dir / "masks" / "index.json"));
  CHECK(fs::exists(dir / "gt" / "object_1" / "trajectory.json"));
  CHECK(fs::exists(dir / "gt" / "object_1" / "shape.ply"));

  // labels survive the round trip
  PlyCloud frame = read_ply(dir / "lidar" / "lidar_0.ply");
  REQUIRE(frame.has_labels());
  CHECK(frame.cloud.size() == truth.lidar_frames.at(0).size());
}

TEST_CASE("scene spec JSON round-trip") {
  SceneSpec spec = static_box_scene(7);
  spec.objects[0].trajectory.velocity = Vec3(0.25, -0.1, 0);
  spec.background.points_per_frame = 123;
  spec.lidar.dropout_base = 0.05;
  ObjectSpec ell = spec.objects[0];
  ell.id = 2;
  ell.shape.type = ShapeSpec::Type::Ellipsoid;
  ell.shape.size = Vec3(1.0, 0.8, 0.6);
  ell.trajectory.type = TrajectorySpec::Type::Circular;
  ell.trajectory.center = Vec3(1, 2, 0.6);
  ell.trajectory.radius = 5.0;
  ell.trajectory.angular_velocity_deg = 2.0;
  spec.objects.push_back(ell);

  fs::path path = fs::temp_directory_path() / "streetfuse_scene_spec.json";
  save_scene_spec(path, spec);
  SceneSpec back = load_scene_spec(path);
  CHECK(back.seed == spec.seed);
  CHECK(back.frames == spec.frames);
  CHECK(back.background.points_per_frame == 123);
  REQUIRE(back.objects.size() == 2);
  CHECK(back.objects[1].shape.type == ShapeSpec::Type::Ellipsoid);
  CHECK(back.objects[1].trajectory.type == TrajectorySpec::Type::Circular);
  CHECK(back.objects[1].trajectory.radius == 5.0);
  REQUIRE(back.rig.cameras.size() == 1);
  CHECK((back.rig.cameras[0].intrinsics - spec.rig.cameras[0].intrinsics).norm() < 1e-15);

  // identical spec -> identical scene
  SceneTruth a = generate_scene(spec);
  SceneTruth b = generate_scene(back);
  CHECK(a.lidar_frames.at(0).positions == b.lidar_frames.at(0).positions);
}
