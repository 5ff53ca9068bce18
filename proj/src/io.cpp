#include "streetfuse/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "streetfuse/errors.hpp"

namespace streetfuse {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void save_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

RigidPose pose_from_12(const std::vector<double>& v) {
  if (v.size() != 12) throw IoError("extrinsics must have 12 entries");
  RigidPose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[r * 4 + c];
    p.translation[r] = v[r * 4 + 3];
  }
  return p;
}

std::vector<double> pose_to_12(const RigidPose& p) {
  std::vector<double> v(12);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[r * 4 + c] = p.rotation(r, c);
    v[r * 4 + 3] = p.translation[r];
  }
  return v;
}

}  // namespace

std::size_t Mask::count_set() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          int nx = x + dx, ny = y + dy;
          if (m.in_bounds(nx, ny)) out.set(nx, ny);
        }
      }
    }
  }
  return out;
}

Mask erode(const Mask& m, int radius) {
  if (radius <= 0) return m;
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      bool keep = m.at(x, y) != 0;
      for (int dy = -radius; keep && dy <= radius; ++dy) {
        for (int dx = -radius; keep && dx <= radius; ++dx) {
          int nx = x + dx, ny = y + dy;
          if (!m.in_bounds(nx, ny) || !m.at(nx, ny)) keep = false;
        }
      }
      if (keep) out.set(x, y);
    }
  }
  return out;
}

Mask shift(const Mask& m, int dx, int dy) {
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      int nx = x + dx, ny = y + dy;
      if (m.in_bounds(nx, ny)) out.set(nx, ny);
    }
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.data.data()),
            static_cast<std::streamsize>(mask.data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Mask read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError(path.string() + ": not a P5 PGM");
  auto next_token = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      return tok;
    }
    throw IoError(path.string() + ": truncated PGM header");
  };
  int w = std::stoi(next_token());
  int h = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError(path.string() + ": unsupported PGM header");
  }
  in.get();  // single whitespace after maxval
  Mask mask(w, h);
  in.read(reinterpret_cast<char*>(mask.data.data()),
          static_cast<std::streamsize>(mask.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(mask.data.size())) {
    throw IoError(path.string() + ": truncated PGM data");
  }
  return mask;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
               const std::vector<int>* labels) {
  if (labels && labels->size() != cloud.size()) {
    throw IoError("label count does not match cloud size");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property int id\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (labels) out << "property int label\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << cloud.ids[i] << " " << format_double(cloud.positions[i].x()) << " "
        << format_double(cloud.positions[i].y()) << " "
        << format_double(cloud.positions[i].z());
    if (labels) out << " " << (*labels)[i];
    out << "\n";
  }
  if (!out) throw IoError("short write to " + path.string());
}

PlyCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError(path.string() + ": not a PLY file");
  std::size_t vertex_count = 0;
  std::vector<std::string> props;
  bool ascii = false;
  bool in_vertex_element = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "comment") {
      continue;
    } else if (word == "element") {
      std::string name;
      std::size_t count;
      ls >> name >> count;
      in_vertex_element = name == "vertex";
      if (in_vertex_element) vertex_count = count;
    } else if (word == "property" && in_vertex_element) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw IoError(path.string() + ": list properties unsupported");
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw IoError(path.string() + ": only ASCII PLY supported");
  auto col = [&](const std::string& name) {
    auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  int cx = col("x"), cy = col("y"), cz = col("z"), cid = col("id"), clabel = col("label");
  if (cx < 0 || cy < 0 || cz < 0) throw IoError(path.string() + ": missing x/y/z properties");

  PlyCloud result;
  result.cloud.ids.reserve(vertex_count);
  result.cloud.positions.reserve(vertex_count);
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < vertex_count; ++i) {
    for (std::size_t c = 0; c < props.size(); ++c) {
      if (!(in >> row[c])) throw IoError(path.string() + ": truncated vertex data");
    }
    PointId id = cid >= 0 ? static_cast<PointId>(std::llround(row[cid]))
                          : static_cast<PointId>(i);
    result.cloud.add(id, Vec3(row[cx], row[cy], row[cz]));
    if (clabel >= 0) result.labels.push_back(static_cast<int>(std::llround(row[clabel])));
  }
  return result;
}

void write_ply_colored(const std::filesystem::path& path, const std::vector<Vec3>& positions,
                       const std::vector<Vec3>& colors) {
  if (positions.size() != colors.size()) throw IoError("position/color count mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << positions.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  auto to_byte = [](double c) {
    return static_cast<int>(std::llround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  for (std::size_t i = 0; i < positions.size(); ++i) {
    out << format_double(positions[i].x()) << " " << format_double(positions[i].y()) << " "
        << format_double(positions[i].z()) << " " << to_byte(colors[i].x()) << " "
        << to_byte(colors[i].y()) << " " << to_byte(colors[i].z()) << "\n";
  }
  if (!out) throw IoError("short write to " + path.string());
}

const CameraRig::Entry& CameraRig::entry(int camera_id) const {
  for (const auto& e : cameras) {
    if (e.camera_id == camera_id) return e;
  }
  throw IoError("unknown camera id " + std::to_string(camera_id));
}

CameraModel CameraRig::camera_at(int camera_id, int frame) const {
  const Entry& e = entry(camera_id);
  CameraModel cam;
  cam.intrinsics = e.intrinsics;
  cam.width = e.width;
  cam.height = e.height;
  if (!e.per_frame_extrinsics.empty()) {
    auto it = e.per_frame_extrinsics.find(frame);
    if (it == e.per_frame_extrinsics.end()) {
      throw IoError("camera " + std::to_string(camera_id) + " has no extrinsics for frame " +
                    std::to_string(frame));
    }
    cam.extrinsics = it->second;
  } else {
    cam.extrinsics = e.fixed_extrinsics;
  }
  return cam;
}

std::vector<int> CameraRig::camera_ids() const {
  std::vector<int> ids;
  ids.reserve(cameras.size());
  for (const auto& e : cameras) ids.push_back(e.camera_id);
  return ids;
}

namespace {

CameraRig rig_from_cameras_json(const json& cameras) {
  CameraRig rig;
  for (const auto& cj : cameras) {
    CameraRig::Entry e;
    e.camera_id = cj.at("camera_id").get<int>();
    auto k = cj.at("K").get<std::vector<double>>();
    if (k.size() != 9) throw IoError("camera K must have 9 entries");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) e.intrinsics(r, c) = k[r * 3 + c];
    auto size = cj.at("image_size").get<std::vector<int>>();
    if (size.size() != 2) throw IoError("image_size must be [width, height]");
    e.width = size[0];
    e.height = size[1];
    if (cj.contains("extrinsics_per_frame")) {
      for (const auto& [key, val] : cj["extrinsics_per_frame"].items()) {
        e.per_frame_extrinsics[std::stoi(key)] = pose_from_12(val.get<std::vector<double>>());
      }
    } else {
      e.fixed_extrinsics = pose_from_12(cj.at("extrinsics").get<std::vector<double>>());
    }
    rig.cameras.push_back(std::move(e));
  }
  std::sort(rig.cameras.begin(), rig.cameras.end(),
            [](const auto& a, const auto& b) { return a.camera_id < b.camera_id; });
  return rig;
}

json rig_to_cameras_json(const CameraRig& rig) {
  json cams = json::array();
  for (const auto& e : rig.cameras) {
    json cj;
    cj["camera_id"] = e.camera_id;
    std::vector<double> k(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) k[r * 3 + c] = e.intrinsics(r, c);
    cj["K"] = k;
    cj["image_size"] = {e.width, e.height};
    if (!e.per_frame_extrinsics.empty()) {
      json per;
      for (const auto& [t, pose] : e.per_frame_extrinsics) {
        per[std::to_string(t)] = pose_to_12(pose);
      }
      cj["extrinsics_per_frame"] = per;
    } else {
      cj["extrinsics"] = pose_to_12(e.fixed_extrinsics);
    }
    cams.push_back(cj);
  }
  return cams;
}

}  // namespace

CameraRig load_calibration(const std::filesystem::path& path) {
  json j = load_json_file(path);
  if (!j.contains("cameras") || !j["cameras"].is_array()) {
    throw IoError(path.string() + ": calibration needs a \"cameras\" array");
  }
  return rig_from_cameras_json(j["cameras"]);
}

void save_calibration(const std::filesystem::path& path, const CameraRig& rig) {
  save_json_file(path, json{{"cameras", rig_to_cameras_json(rig)}});
}

CameraRig camera_rig_from_json_array(const std::string& cameras_json) {
  return rig_from_cameras_json(json::parse(cameras_json));
}

std::string camera_rig_to_json_array(const CameraRig& rig) {
  return rig_to_cameras_json(rig).dump();
}

std::vector<MaskRef> load_mask_index(const std::filesystem::path& index_path) {
  json j = load_json_file(index_path);
  if (!j.contains("masks") || !j["masks"].is_array()) {
    throw IoError(index_path.string() + ": mask index needs a \"masks\" array");
  }
  std::vector<MaskRef> refs;
  auto base = index_path.parent_path();
  for (const auto& mj : j["masks"]) {
    MaskRef ref;
    ref.object_id = mj.at("object").get<int>();
    ref.camera_id = mj.at("camera").get<int>();
    ref.frame = mj.at("frame").get<int>();
    std::filesystem::path file = mj.at("file").get<std::string>();
    ref.file = file.is_absolute() ? file : base / file;
    refs.push_back(std::move(ref));
  }
  return refs;
}

void save_mask_index(const std::filesystem::path& index_path, const std::vector<MaskRef>& refs) {
  json arr = json::array();
  auto base = index_path.parent_path();
  for (const auto& ref : refs) {
    json mj;
    mj["object"] = ref.object_id;
    mj["camera"] = ref.camera_id;
    mj["frame"] = ref.frame;
    mj["file"] = std::filesystem::relative(ref.file, base).string();
    arr.push_back(mj);
  }
  save_json_file(index_path, json{{"masks", arr}});
}

std::vector<MaskRef> scan_mask_dir(const std::filesystem::path& dir) {
  std::vector<MaskRef> refs;
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    int object, camera, frame;
    if (std::sscanf(name.c_str(), "mask_%d_%d_%d.pgm", &object, &camera, &frame) == 3) {
      refs.push_back({object, camera, frame, entry.path()});
    }
  }
  std::sort(refs.begin(), refs.end(), [](const MaskRef& a, const MaskRef& b) {
    return std::tie(a.object_id, a.camera_id, a.frame) <
           std::tie(b.object_id, b.camera_id, b.frame);
  });
  return refs;
}

const char* to_string(FrameStatus s) {
  switch (s) {
    case FrameStatus::Fused:
      return "Fused";
    case FrameStatus::PoseOnly:
      return "PoseOnly";
    case FrameStatus::Rejected:
      return "Rejected";
    case FrameStatus::Unobserved:
      return "Unobserved";
  }
  return "Unobserved";
}

FrameStatus frame_status_from_string(const std::string& s) {
  if (s == "Fused") return FrameStatus::Fused;
  if (s == "PoseOnly") return FrameStatus::PoseOnly;
  if (s == "Rejected") return FrameStatus::Rejected;
  if (s == "Unobserved") return FrameStatus::Unobserved;
  throw IoError("unknown frame status \"" + s + "\"");
}

void save_trajectory(const std::filesystem::path& path,
                     const std::vector<TrajectoryEntry>& traj) {
  json arr = json::array();
  for (const auto& e : traj) {
    json ej;
    ej["t"] = e.t;
    ej["status"] = to_string(e.status);
    if (e.pose) {
      std::vector<double> rot(9);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot[r * 3 + c] = e.pose->rotation(r, c);
      ej["rotation"] = rot;
      ej["translation"] = {e.pose->translation.x(), e.pose->translation.y(),
                           e.pose->translation.z()};
    }
    arr.push_back(ej);
  }
  save_json_file(path, arr);
}

std::vector<TrajectoryEntry> load_trajectory(const std::filesystem::path& path) {
  json arr = load_json_file(path);
  if (!arr.is_array()) throw IoError(path.string() + ": trajectory must be a JSON array");
  std::vector<TrajectoryEntry> traj;
  for (const auto& ej : arr) {
    TrajectoryEntry e;
    e.t = ej.at("t").get<int>();
    e.status = frame_status_from_string(ej.at("status").get<std::string>());
    if (ej.contains("rotation")) {
      RigidPose pose;
      auto rot = ej["rotation"].get<std::vector<double>>();
      if (rot.size() != 9) throw IoError("rotation must have 9 entries");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[r * 3 + c];
      auto tr = ej.at("translation").get<std::vector<double>>();
      if (tr.size() != 3) throw IoError("translation must have 3 entries");
      pose.translation = Vec3(tr[0], tr[1], tr[2]);
      e.pose = pose;
    }
    traj.push_back(std::move(e));
  }
  return traj;
}

}  // namespace streetfuse
