#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <vector>

#include "streetfuse/fuse.hpp"
#include "streetfuse/geom.hpp"
#include "streetfuse/motionfield.hpp"

namespace streetfuse {

// Per-frame trajectory errors against ground truth. Translation errors are
// clipped at 1 m, rotation errors at 30 degrees; frames with no recorded pose
// count as missing and contribute exactly the clip values.
struct TrajectoryError {
  static constexpr double kTranslationClip = 1.0;   // meters
  static constexpr double kRotationClipDeg = 30.0;  // degrees
  static constexpr int kHistogramBins = 20;

  std::vector<int> frames;  // evaluated ground-truth frames, ascending
  std::vector<double> translation_error;
  std::vector<double> rotation_error;
  std::vector<bool> missing;

  int missing_count = 0;
  double mean_translation = 0.0;
  double median_translation = 0.0;
  double max_translation = 0.0;
  double mean_rotation = 0.0;
  double median_rotation = 0.0;
  double max_rotation = 0.0;
  std::array<int, kHistogramBins> translation_hist{};
  std::array<int, kHistogramBins> rotation_hist{};
};

// Compares an estimated pose map against ground truth on the given frame set.
// Both trajectories are first expressed relative to their own first recorded
// frame so the arbitrary canonical-frame choice cancels. Throws
// EmptyGroundTruth when the frame set is empty.
TrajectoryError trajectory_error(const std::map<int, RigidPose>& est_poses,
                                 const std::map<int, RigidPose>& gt_poses,
                                 const std::vector<int>& gt_frames);

TrajectoryError trajectory_error(const CanonicalObject& est,
                                 const std::map<int, RigidPose>& gt_poses,
                                 const std::vector<int>& gt_frames);

// Rigid motion implied by the field at each frame: the best rigid fit from
// the base points to their deformed positions.
std::map<int, RigidPose> field_implied_poses(const HexPlaneField& field,
                                             const std::vector<Vec3>& points,
                                             const std::vector<int>& frames);

// CSV writers. errors CSV: t,translation_error,rotation_error,missing.
// histogram CSV: bin_lo_translation,bin_hi_translation,translation_count,
//                bin_lo_rotation,bin_hi_rotation,rotation_count.
void write_error_csv(const std::filesystem::path& path, const TrajectoryError& err);
void write_error_hist_csv(const std::filesystem::path& path, const TrajectoryError& err);
void write_error_summary_csv(const std::filesystem::path& path,
                             const std::map<int, TrajectoryError>& by_object);

}  // namespace streetfuse
