#include "streetfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "streetfuse/errors.hpp"

namespace streetfuse {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

int hist_bin(double value, double clip) {
  int bin = static_cast<int>(std::floor(value / clip * TrajectoryError::kHistogramBins));
  return std::clamp(bin, 0, TrajectoryError::kHistogramBins - 1);
}

// Both trajectories re-anchored at their own first recorded frame.
std::map<int, RigidPose> gauge_align(const std::map<int, RigidPose>& poses) {
  if (poses.empty()) return {};
  const RigidPose anchor_inv = poses.begin()->second.inverse();
  std::map<int, RigidPose> out;
  for (const auto& [t, pose] : poses) {
    out[t] = pose.compose(anchor_inv).orthonormalized();
  }
  return out;
}

}  // namespace

TrajectoryError trajectory_error(const std::map<int, RigidPose>& est_poses,
                                 const std::map<int, RigidPose>& gt_poses,
                                 const std::vector<int>& gt_frames) {
  if (gt_frames.empty() || gt_poses.empty()) {
    throw EmptyGroundTruth("trajectory_error: no ground-truth frames");
  }
  std::map<int, RigidPose> est = gauge_align(est_poses);
  std::map<int, RigidPose> gt = gauge_align(gt_poses);

  TrajectoryError err;
  err.frames = gt_frames;
  std::sort(err.frames.begin(), err.frames.end());
  for (int t : err.frames) {
    auto git = gt.find(t);
    if (git == gt.end()) {
      throw EmptyGroundTruth("trajectory_error: ground truth missing frame " + std::to_string(t));
    }
    auto eit = est.find(t);
    double te, re;
    bool miss = eit == est.end();
    if (miss) {
      te = TrajectoryError::kTranslationClip;
      re = TrajectoryError::kRotationClipDeg;
      ++err.missing_count;
    } else {
      te = std::min((eit->second.translation - git->second.translation).norm(),
                    TrajectoryError::kTranslationClip);
      re = std::min(rotation_angle_deg(eit->second, git->second),
                    TrajectoryError::kRotationClipDeg);
    }
    err.translation_error.push_back(te);
    err.rotation_error.push_back(re);
    err.missing.push_back(miss);
    err.translation_hist[hist_bin(te, TrajectoryError::kTranslationClip)]++;
    err.rotation_hist[hist_bin(re, TrajectoryError::kRotationClipDeg)]++;
  }

  const double n = static_cast<double>(err.frames.size());
  for (double v : err.translation_error) {
    err.mean_translation += v / n;
    err.max_translation = std::max(err.max_translation, v);
  }
  for (double v : err.rotation_error) {
    err.mean_rotation += v / n;
    err.max_rotation = std::max(err.max_rotation, v);
  }
  err.median_translation = median_of(err.translation_error);
  err.median_rotation = median_of(err.rotation_error);
  return err;
}

TrajectoryError trajectory_error(const CanonicalObject& est,
                                 const std::map<int, RigidPose>& gt_poses,
                                 const std::vector<int>& gt_frames) {
  return trajectory_error(est.poses, gt_poses, gt_frames);
}

std::map<int, RigidPose> field_implied_poses(const HexPlaneField& field,
                                             const std::vector<Vec3>& points,
                                             const std::vector<int>& frames) {
  std::map<int, RigidPose> out;
  for (int t : frames) {
    std::vector<Eigen::Vector4d> queries;
    queries.reserve(points.size());
    for (const auto& p : points) queries.emplace_back(p.x(), p.y(), p.z(), static_cast<double>(t));
    Eigen::Matrix3Xd dx, dc;
    field.forward(queries, dx, dc, nullptr);
    std::vector<Vec3> deformed(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      deformed[i] = points[i] + Vec3(dx.col(static_cast<Eigen::Index>(i)));
    }
    out[t] = kabsch(points, deformed);
  }
  return out;
}

void write_error_csv(const std::filesystem::path& path, const TrajectoryError& err) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "t,translation_error,rotation_error,missing\n";
  char buf[96];
  for (std::size_t i = 0; i < err.frames.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%d\n", err.frames[i],
                  err.translation_error[i], err.rotation_error[i], err.missing[i] ? 1 : 0);
    out << buf;
  }
}

void write_error_hist_csv(const std::filesystem::path& path, const TrajectoryError& err) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "bin,translation_lo,translation_hi,translation_count,rotation_lo,rotation_hi,"
         "rotation_count\n";
  char buf[160];
  for (int b = 0; b < TrajectoryError::kHistogramBins; ++b) {
    const double tw = TrajectoryError::kTranslationClip / TrajectoryError::kHistogramBins;
    const double rw = TrajectoryError::kRotationClipDeg / TrajectoryError::kHistogramBins;
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%d,%.10g,%.10g,%d\n", b, b * tw, (b + 1) * tw,
                  err.translation_hist[b], b * rw, (b + 1) * rw, err.rotation_hist[b]);
    out << buf;
  }
}

void write_error_summary_csv(const std::filesystem::path& path,
                             const std::map<int, TrajectoryError>& by_object) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "object,frames,missing,mean_translation,median_translation,max_translation,"
         "mean_rotation,median_rotation,max_rotation\n";
  char buf[256];
  for (const auto& [id, err] : by_object) {
    std::snprintf(buf, sizeof(buf), "%d,%zu,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", id,
                  err.frames.size(), err.missing_count, err.mean_translation,
                  err.median_translation, err.max_translation, err.mean_rotation,
                  err.median_rotation, err.max_rotation);
    out << buf;
  }
}

}  // namespace streetfuse
