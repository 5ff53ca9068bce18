#include "streetfuse/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "streetfuse/errors.hpp"
#include "streetfuse/spatial.hpp"

namespace streetfuse {

namespace {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  // splitmix-style mixing for derived per-frame seeds
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Mat3 yaw_rotation(double angle_rad) {
  Mat3 r;
  r << std::cos(angle_rad), -std::sin(angle_rad), 0, std::sin(angle_rad), std::cos(angle_rad), 0,
      0, 0, 1;
  return r;
}

Vec3 sample_box_surface(const Vec3& size, std::mt19937_64& rng) {
  const Vec3 h = size * 0.5;
  const double area_xy = size.x() * size.y();
  const double area_xz = size.x() * size.z();
  const double area_yz = size.y() * size.z();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double pick = unit(rng) * (area_xy + area_xz + area_yz);
  double sgn = unit(rng) < 0.5 ? -1.0 : 1.0;
  double u = unit(rng) * 2.0 - 1.0;
  double v = unit(rng) * 2.0 - 1.0;
  if (pick < area_xy) return {u * h.x(), v * h.y(), sgn * h.z()};
  if (pick < area_xy + area_xz) return {u * h.x(), sgn * h.y(), v * h.z()};
  return {sgn * h.x(), u * h.y(), v * h.z()};
}

Vec3 sample_ellipsoid_surface(const Vec3& radii, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
  double n = dir.norm();
  if (n < 1e-12) dir = Vec3(1, 0, 0);
  else dir /= n;
  return dir.cwiseProduct(radii);
}

std::vector<Vec3> sample_shape(const ShapeSpec& shape, const std::vector<Vec3>& imported,
                               int count, std::mt19937_64& rng) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(count));
  switch (shape.type) {
    case ShapeSpec::Type::Box:
      for (int i = 0; i < count; ++i) pts.push_back(sample_box_surface(shape.size, rng));
      break;
    case ShapeSpec::Type::Ellipsoid:
      for (int i = 0; i < count; ++i) pts.push_back(sample_ellipsoid_surface(shape.size, rng));
      break;
    case ShapeSpec::Type::Ply: {
      if (imported.empty()) throw InvalidSpec("ply shape has no vertices");
      std::uniform_int_distribution<std::size_t> pick(0, imported.size() - 1);
      for (int i = 0; i < count; ++i) pts.push_back(imported[pick(rng)]);
      break;
    }
  }
  return pts;
}

void validate(const SceneSpec& spec) {
  if (spec.objects.empty()) throw InvalidSpec("objects: at least one object required");
  if (spec.rig.cameras.empty()) throw InvalidSpec("cameras: at least one camera required");
  if (spec.frames < 2) throw InvalidSpec("frames: at least two frames required");
  for (const auto& obj : spec.objects) {
    if (obj.points_per_frame < 1) {
      throw InvalidSpec("objects[" + std::to_string(obj.id) + "].points_per_frame must be >= 1");
    }
    if (obj.trajectory.type == TrajectorySpec::Type::Keyframes) {
      for (int t = 0; t < spec.frames; ++t) {
        if (!obj.trajectory.keyframes.count(t)) {
          throw InvalidSpec("objects[" + std::to_string(obj.id) +
                            "].trajectory.keyframes missing frame " + std::to_string(t));
        }
      }
    }
  }
  std::vector<int> ids;
  for (const auto& obj : spec.objects) ids.push_back(obj.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw InvalidSpec("objects: duplicate object id");
  }
}

}  // namespace

RigidPose trajectory_pose(const TrajectorySpec& traj, int t) {
  switch (traj.type) {
    case TrajectorySpec::Type::ConstantVelocity: {
      RigidPose p;
      p.translation = traj.start + traj.velocity * static_cast<double>(t);
      return p;
    }
    case TrajectorySpec::Type::Circular: {
      const double deg = traj.start_angle_deg + traj.angular_velocity_deg * static_cast<double>(t);
      const double theta = deg * M_PI / 180.0;
      RigidPose p;
      p.translation =
          traj.center + Vec3(traj.radius * std::cos(theta), traj.radius * std::sin(theta), 0.0);
      // heading along the direction of motion
      p.rotation = yaw_rotation(theta + M_PI / 2.0);
      return p;
    }
    case TrajectorySpec::Type::Keyframes: {
      auto it = traj.keyframes.find(t);
      if (it == traj.keyframes.end()) {
        throw InvalidSpec("keyframed trajectory missing frame " + std::to_string(t));
      }
      return it->second;
    }
  }
  return RigidPose::identity();
}

SceneTruth generate_scene(const SceneSpec& spec) {
  validate(spec);
  SceneTruth truth;
  truth.spec = spec;

  // reference samplings and imported shapes
  std::map<int, std::vector<Vec3>> imported;
  for (const auto& obj : spec.objects) {
    if (obj.shape.type == ShapeSpec::Type::Ply) {
      imported[obj.id] = read_ply(obj.shape.ply_path).cloud.positions;
    }
    std::mt19937_64 rng(mix_seed(spec.seed, 0xCAFEu, static_cast<std::uint64_t>(obj.id)));
    truth.shape_reference[obj.id] =
        sample_shape(obj.shape, imported[obj.id], std::max(obj.points_per_frame, 2000), rng);
  }

  for (const auto& obj : spec.objects) {
    for (int t = 0; t < spec.frames; ++t) {
      truth.trajectories[obj.id][t] = trajectory_pose(obj.trajectory, t);
    }
  }

  // One surface sampling per object, reused every frame so that a static
  // scene produces identical frames and masks. Range-dependent dropout draws
  // from a per-frame stream, so enabling it varies the surviving subset.
  std::map<int, std::vector<Vec3>> sampling;
  for (const auto& obj : spec.objects) {
    std::mt19937_64 rng(mix_seed(spec.seed, 0xA11Au, static_cast<std::uint64_t>(obj.id)));
    sampling[obj.id] = sample_shape(obj.shape, imported[obj.id], obj.points_per_frame, rng);
  }

  for (int t = 0; t < spec.frames; ++t) {
    PointCloud frame;
    std::vector<int> labels;
    PointId next_id = 0;
    for (const auto& obj : spec.objects) {
      std::mt19937_64 drop_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(t) + 1,
                                        static_cast<std::uint64_t>(obj.id)));
      const RigidPose& pose = truth.trajectories[obj.id][t];
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (const auto& cp : sampling[obj.id]) {
        Vec3 world = pose.apply(cp);
        double range = (world - spec.lidar.origin).norm();
        double p_drop = spec.lidar.dropout_base + spec.lidar.dropout_per_meter * range;
        if (p_drop > 0.0 && unit(drop_rng) < std::min(p_drop, 1.0)) continue;
        frame.add(next_id++, world);
        labels.push_back(obj.id);
      }
    }
    if (spec.background.points_per_frame > 0) {
      std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(t) + 1, 0xb6u));
      std::uniform_real_distribution<double> ux(spec.background.lo.x(), spec.background.hi.x());
      std::uniform_real_distribution<double> uy(spec.background.lo.y(), spec.background.hi.y());
      std::uniform_real_distribution<double> uz(spec.background.lo.z(), spec.background.hi.z());
      for (int i = 0; i < spec.background.points_per_frame; ++i) {
        frame.add(next_id++, Vec3(ux(rng), uy(rng), uz(rng)));
        labels.push_back(-1);
      }
    }
    truth.lidar_frames[t] = std::move(frame);
    truth.lidar_labels[t] = std::move(labels);
  }

  // masks: project each object's labeled points; optional z-buffer occlusion
  for (const auto& cam_entry : spec.rig.cameras) {
    for (int t = 0; t < spec.frames; ++t) {
      CameraModel cam = spec.rig.camera_at(cam_entry.camera_id, t);
      const PointCloud& frame = truth.lidar_frames[t];
      const std::vector<int>& labels = truth.lidar_labels[t];

      std::vector<double> zbuffer;
      std::vector<std::optional<Eigen::Vector2d>> uv(frame.size());
      std::vector<double> depth(frame.size(), 0.0);
      for (std::size_t i = 0; i < frame.size(); ++i) {
        uv[i] = project(frame.positions[i], cam);
        if (uv[i]) depth[i] = camera_depth(frame.positions[i], cam);
      }
      if (spec.occlusion) {
        zbuffer.assign(static_cast<std::size_t>(cam.width) * cam.height,
                       std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < frame.size(); ++i) {
          if (!uv[i]) continue;
          auto px = static_cast<std::size_t>(std::llround(uv[i]->y())) * cam.width +
                    static_cast<std::size_t>(std::llround(uv[i]->x()));
          zbuffer[px] = std::min(zbuffer[px], depth[i]);
        }
      }

      for (const auto& obj : spec.objects) {
        Mask mask(cam.width, cam.height);
        for (std::size_t i = 0; i < frame.size(); ++i) {
          if (labels[i] != obj.id || !uv[i]) continue;
          long x = std::llround(uv[i]->x());
          long y = std::llround(uv[i]->y());
          if (spec.occlusion) {
            auto px = static_cast<std::size_t>(y) * cam.width + static_cast<std::size_t>(x);
            if (depth[i] > zbuffer[px] + 0.05) continue;
          }
          mask.set(static_cast<int>(x), static_cast<int>(y));
        }
        truth.masks[{obj.id, cam_entry.camera_id, t}] = dilate(mask, spec.mask_dilation_px);
      }
    }
  }
  return truth;
}

double surface_distance(const ShapeSpec& shape, const std::vector<Vec3>& reference,
                        const Vec3& p) {
  switch (shape.type) {
    case ShapeSpec::Type::Box: {
      // signed box distance, then absolute value for surface distance
      const Vec3 h = shape.size * 0.5;
      Vec3 q = p.cwiseAbs() - h;
      double outside = q.cwiseMax(0.0).norm();
      double inside = std::min(std::max({q.x(), q.y(), q.z()}), 0.0);
      return std::abs(outside + inside);
    }
    case ShapeSpec::Type::Ellipsoid: {
      // first-order approximation of ellipsoid surface distance
      const Vec3& r = shape.size;
      double k0 = (p.cwiseQuotient(r)).norm();
      double k1 = (p.cwiseQuotient(r.cwiseProduct(r))).norm();
      if (k1 < 1e-12) return r.minCoeff();
      return std::abs(k0 * (k0 - 1.0) / k1);
    }
    case ShapeSpec::Type::Ply: {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : reference) best = std::min(best, (p - q).norm());
      return best;
    }
  }
  return 0.0;
}

std::map<std::tuple<int, int, int>, Mask> corrupt_tracks(const SceneTruth& truth,
                                                         double drop_rate, double pose_noise_px,
                                                         int mask_erosion_px,
                                                         std::uint64_t seed) {
  if (drop_rate < 0.0 || drop_rate >= 1.0) {
    throw InvalidSpec("drop_rate must be in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, pose_noise_px);
  std::map<std::tuple<int, int, int>, Mask> out;
  for (const auto& [key, mask] : truth.masks) {
    if (drop_rate > 0.0 && unit(rng) < drop_rate) continue;
    Mask m = mask;
    if (pose_noise_px > 0.0) {
      int dx = static_cast<int>(std::llround(jitter(rng)));
      int dy = static_cast<int>(std::llround(jitter(rng)));
      m = shift(m, dx, dy);
    }
    if (mask_erosion_px > 0) m = erode(m, mask_erosion_px);
    out[key] = std::move(m);
  }
  return out;
}

void write_scene(const SceneTruth& truth, const std::filesystem::path& out_dir) {
  write_scene(truth, out_dir, truth.masks);
}

void write_scene(const SceneTruth& truth, const std::filesystem::path& out_dir,
                 const std::map<std::tuple<int, int, int>, Mask>& masks) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "lidar");
  fs::create_directories(out_dir / "masks");
  save_calibration(out_dir / "calibration.json", truth.spec.rig);

  for (const auto& [t, frame] : truth.lidar_frames) {
    write_ply(out_dir / "lidar" / ("lidar_" + std::to_string(t) + ".ply"), frame,
              &truth.lidar_labels.at(t));
  }

  std::vector<MaskRef> refs;
  for (const auto& [key, mask] : masks) {
    const auto& [obj, cam, t] = key;
    std::string name = "mask_" + std::to_string(obj) + "_" + std::to_string(cam) + "_" +
                       std::to_string(t) + ".pgm";
    write_pgm(out_dir / "masks" / name, mask);
    refs.push_back({obj, cam, t, out_dir / "masks" / name});
  }
  save_mask_index(out_dir / "masks" / "index.json", refs);

  for (const auto& [obj_id, traj] : truth.trajectories) {
    fs::path obj_dir = out_dir / "gt" / ("object_" + std::to_string(obj_id));
    fs::create_directories(obj_dir);
    std::vector<TrajectoryEntry> entries;
    for (const auto& [t, pose] : traj) {
      TrajectoryEntry e;
      e.t = t;
      e.status = FrameStatus::Fused;
      e.pose = pose;
      entries.push_back(e);
    }
    save_trajectory(obj_dir / "trajectory.json", entries);
    PointCloud shape;
    PointId id = 0;
    for (const auto& p : truth.shape_reference.at(obj_id)) shape.add(id++, p);
    write_ply(obj_dir / "shape.ply", shape);
  }
}

namespace {

Vec3 vec3_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw InvalidSpec("expected a 3-element array");
  return {v[0], v[1], v[2]};
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidSpec("invalid scene spec JSON: " + std::string(e.what()));
  }

  SceneSpec spec;
  spec.seed = j.value("seed", 1ULL);
  spec.frames = j.value("frames", 2);
  spec.mask_dilation_px = j.value("mask_dilation_px", 1);
  spec.occlusion = j.value("occlusion", false);

  if (j.contains("lidar")) {
    const auto& lj = j["lidar"];
    if (lj.contains("origin")) spec.lidar.origin = vec3_from_json(lj["origin"]);
    spec.lidar.dropout_base = lj.value("dropout_base", 0.0);
    spec.lidar.dropout_per_meter = lj.value("dropout_per_meter", 0.0);
  }
  if (j.contains("background")) {
    const auto& bj = j["background"];
    spec.background.points_per_frame = bj.value("points_per_frame", 0);
    if (bj.contains("lo")) spec.background.lo = vec3_from_json(bj["lo"]);
    if (bj.contains("hi")) spec.background.hi = vec3_from_json(bj["hi"]);
  }

  if (!j.contains("objects")) throw InvalidSpec("scene spec needs an \"objects\" array");
  for (const auto& oj : j["objects"]) {
    ObjectSpec obj;
    obj.id = oj.at("id").get<int>();
    obj.points_per_frame = oj.value("points_per_frame", 1000);
    if (oj.contains("color")) obj.color = vec3_from_json(oj["color"]);
    const auto& sj = oj.at("shape");
    std::string stype = sj.at("type").get<std::string>();
    if (stype == "box") {
      obj.shape.type = ShapeSpec::Type::Box;
      obj.shape.size = vec3_from_json(sj.at("size"));
    } else if (stype == "ellipsoid") {
      obj.shape.type = ShapeSpec::Type::Ellipsoid;
      obj.shape.size = vec3_from_json(sj.at("radii"));
    } else if (stype == "ply") {
      obj.shape.type = ShapeSpec::Type::Ply;
      std::filesystem::path p = sj.at("path").get<std::string>();
      obj.shape.ply_path = p.is_absolute() ? p : path.parent_path() / p;
    } else {
      throw InvalidSpec("unknown shape type \"" + stype + "\"");
    }
    const auto& tj = oj.at("trajectory");
    std::string ttype = tj.at("type").get<std::string>();
    if (ttype == "constant_velocity") {
      obj.trajectory.type = TrajectorySpec::Type::ConstantVelocity;
      obj.trajectory.start = vec3_from_json(tj.at("start"));
      obj.trajectory.velocity = vec3_from_json(tj.at("velocity"));
    } else if (ttype == "circular") {
      obj.trajectory.type = TrajectorySpec::Type::Circular;
      obj.trajectory.center = vec3_from_json(tj.at("center"));
      obj.trajectory.radius = tj.at("radius").get<double>();
      obj.trajectory.angular_velocity_deg = tj.at("angular_velocity_deg").get<double>();
      obj.trajectory.start_angle_deg = tj.value("start_angle_deg", 0.0);
    } else if (ttype == "keyframes") {
      obj.trajectory.type = TrajectorySpec::Type::Keyframes;
      for (const auto& kj : tj.at("poses")) {
        int t = kj.at("t").get<int>();
        RigidPose pose;
        auto rot = kj.at("rotation").get<std::vector<double>>();
        if (rot.size() != 9) throw InvalidSpec("keyframe rotation must have 9 entries");
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[r * 3 + c];
        pose.translation = vec3_from_json(kj.at("translation"));
        obj.trajectory.keyframes[t] = pose;
      }
    } else {
      throw InvalidSpec("unknown trajectory type \"" + ttype + "\"");
    }
    spec.objects.push_back(std::move(obj));
  }

  if (!j.contains("cameras")) throw InvalidSpec("scene spec needs a \"cameras\" array");
  // cameras share the calibration schema
  spec.rig = camera_rig_from_json_array(j["cameras"].dump());
  return spec;
}

void save_scene_spec(const std::filesystem::path& path, const SceneSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["frames"] = spec.frames;
  j["mask_dilation_px"] = spec.mask_dilation_px;
  j["occlusion"] = spec.occlusion;
  j["lidar"] = {{"origin", vec3_to_json(spec.lidar.origin)},
                {"dropout_base", spec.lidar.dropout_base},
                {"dropout_per_meter", spec.lidar.dropout_per_meter}};
  j["background"] = {{"points_per_frame", spec.background.points_per_frame},
                     {"lo", vec3_to_json(spec.background.lo)},
                     {"hi", vec3_to_json(spec.background.hi)}};
  json objects = json::array();
  for (const auto& obj : spec.objects) {
    json oj;
    oj["id"] = obj.id;
    oj["points_per_frame"] = obj.points_per_frame;
    oj["color"] = vec3_to_json(obj.color);
    switch (obj.shape.type) {
      case ShapeSpec::Type::Box:
        oj["shape"] = {{"type", "box"}, {"size", vec3_to_json(obj.shape.size)}};
        break;
      case ShapeSpec::Type::Ellipsoid:
        oj["shape"] = {{"type", "ellipsoid"}, {"radii", vec3_to_json(obj.shape.size)}};
        break;
      case ShapeSpec::Type::Ply:
        oj["shape"] = {{"type", "ply"}, {"path", obj.shape.ply_path.string()}};
        break;
    }
    switch (obj.trajectory.type) {
      case TrajectorySpec::Type::ConstantVelocity:
        oj["trajectory"] = {{"type", "constant_velocity"},
                            {"start", vec3_to_json(obj.trajectory.start)},
                            {"velocity", vec3_to_json(obj.trajectory.velocity)}};
        break;
      case TrajectorySpec::Type::Circular:
        oj["trajectory"] = {{"type", "circular"},
                            {"center", vec3_to_json(obj.trajectory.center)},
                            {"radius", obj.trajectory.radius},
                            {"angular_velocity_deg", obj.trajectory.angular_velocity_deg},
                            {"start_angle_deg", obj.trajectory.start_angle_deg}};
        break;
      case TrajectorySpec::Type::Keyframes: {
        json poses = json::array();
        for (const auto& [t, pose] : obj.trajectory.keyframes) {
          std::vector<double> rot(9);
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) rot[r * 3 + c] = pose.rotation(r, c);
          poses.push_back({{"t", t},
                           {"rotation", rot},
                           {"translation", vec3_to_json(pose.translation)}});
        }
        oj["trajectory"] = {{"type", "keyframes"}, {"poses", poses}};
        break;
      }
    }
    objects.push_back(oj);
  }
  j["objects"] = objects;
  j["cameras"] = json::parse(camera_rig_to_json_array(spec.rig));

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace streetfuse
