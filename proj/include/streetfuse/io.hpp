#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streetfuse/geom.hpp"

namespace streetfuse {

// Binary instance mask. Nonzero bytes mark pixels inside the mask.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  void set(int x, int y, std::uint8_t v = 255) {
    data[static_cast<std::size_t>(y) * width + x] = v;
  }

  // Mask membership for a continuous pixel coordinate: the rounded-to-nearest
  // pixel must be in bounds and set.
  bool contains(double u, double v) const {
    long x = std::llround(u);
    long y = std::llround(v);
    return in_bounds(static_cast<int>(x), static_cast<int>(y)) &&
           at(static_cast<int>(x), static_cast<int>(y)) != 0;
  }

  std::size_t count_set() const;
  bool empty_mask() const { return count_set() == 0; }
};

// Morphology with a square structuring element of the given radius.
Mask dilate(const Mask& m, int radius);
Mask erode(const Mask& m, int radius);

// Shifts mask content by (dx, dy) pixels; pixels shifted outside are dropped.
Mask shift(const Mask& m, int dx, int dy);

// --- PGM (P5, 8-bit) ---

void write_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm(const std::filesystem::path& path);

// --- ASCII PLY point clouds ---
//
// LiDAR frames and canonical models are ASCII PLY with an integer `id`
// property per vertex. Generated scenes additionally carry an integer `label`
// (object id, or -1 for background); readers ignore properties they do not
// know.

struct PlyCloud {
  PointCloud cloud;
  std::vector<int> labels;  // empty unless the file carries labels
  bool has_labels() const { return !labels.empty(); }
};

void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
               const std::vector<int>* labels = nullptr);
PlyCloud read_ply(const std::filesystem::path& path);

// Colored cloud without ids, for deformed snapshots. Colors in [0,1] are
// stored as 8-bit red/green/blue.
void write_ply_colored(const std::filesystem::path& path, const std::vector<Vec3>& positions,
                       const std::vector<Vec3>& colors);

// --- Calibration ---
//
// JSON with per-camera K (row-major 9 floats), extrinsics (row-major 12
// floats, world->camera), and image size. Extrinsics are either rig-fixed
// ("extrinsics") or per-frame ("extrinsics_per_frame", keyed by frame index).

struct CameraRig {
  struct Entry {
    int camera_id = 0;
    Mat3 intrinsics = Mat3::Identity();
    int width = 0;
    int height = 0;
    RigidPose fixed_extrinsics;
    std::map<int, RigidPose> per_frame_extrinsics;  // empty when rig-fixed
  };
  std::vector<Entry> cameras;  // sorted by camera_id

  const Entry& entry(int camera_id) const;
  CameraModel camera_at(int camera_id, int frame) const;
  std::vector<int> camera_ids() const;
};

CameraRig load_calibration(const std::filesystem::path& path);
void save_calibration(const std::filesystem::path& path, const CameraRig& rig);

// JSON <-> rig conversion on the "cameras" array itself, shared by the
// calibration file and the scene-spec format.
CameraRig camera_rig_from_json_array(const std::string& cameras_json);
std::string camera_rig_to_json_array(const CameraRig& rig);

// --- Mask index ---

struct MaskRef {
  int object_id = 0;
  int camera_id = 0;
  int frame = 0;
  std::filesystem::path file;
};

std::vector<MaskRef> load_mask_index(const std::filesystem::path& index_path);
void save_mask_index(const std::filesystem::path& index_path, const std::vector<MaskRef>& refs);

// Scans a directory for files named mask_<object>_<camera>_<frame>.pgm.
std::vector<MaskRef> scan_mask_dir(const std::filesystem::path& dir);

// --- Trajectories ---
//
// trajectory.json: array of {t, status, rotation: 9 floats row-major,
// translation: 3 floats}; rotation/translation present only when a pose was
// recorded at t.

enum class FrameStatus { Fused, PoseOnly, Rejected, Unobserved };

const char* to_string(FrameStatus s);
FrameStatus frame_status_from_string(const std::string& s);

struct TrajectoryEntry {
  int t = 0;
  FrameStatus status = FrameStatus::Unobserved;
  std::optional<RigidPose> pose;
};

void save_trajectory(const std::filesystem::path& path, const std::vector<TrajectoryEntry>& traj);
std::vector<TrajectoryEntry> load_trajectory(const std::filesystem::path& path);

}  // namespace streetfuse
