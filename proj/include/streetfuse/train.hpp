#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "streetfuse/fuse.hpp"
#include "streetfuse/geom.hpp"
#include "streetfuse/motionfield.hpp"

namespace streetfuse {

struct TrainConfig {
  long iterations = 5000;
  double motion_phase_fraction = 0.4;  // motion loss active for the first fraction
  double lambda_motion = 1.0;
  double lambda_tv = 0.1;
  double lambda_color_reg = 0.01;
  // Carried for config fidelity; the corresponding photometric losses need a
  // renderer and are not computed here.
  double lambda_rgb = 1.0;
  double lambda_ssim = 0.1;
  double lambda_depth = 1.0;
  double max_depth = 80.0;
  // With no photometric losses in the objective, the phase after the motion
  // window is driven by the regularizers alone; 1e-2 on the planes lets that
  // phase smooth away the fitted motion, so the default is lower here.
  double lr_planes = 2e-3;
  double lr_networks = 1e-4;
  // Cosine decays both rates to lr_floor_fraction of their base value over
  // the first lr_decay_horizon fraction of the run, then holds the floor,
  // the way splatting pipelines decay their position rates. The default
  // horizon matches the motion window: once the only remaining losses are
  // regularizers, parameters should barely move.
  enum class LrSchedule { Constant, Cosine };
  LrSchedule lr_schedule = LrSchedule::Cosine;
  double lr_floor_fraction = 0.01;
  double lr_decay_horizon = 0.4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
  int batch = 4096;  // points per step, split across objects
  std::uint64_t seed = 0;
};

// Trajectory supervision for one object: canonical points plus the recorded
// pose (canonical -> world) at each valid frame.
struct ObjectSupervision {
  int object_id = 0;
  std::vector<Vec3> points;
  std::map<int, RigidPose> poses;

  bool valid_at(int t) const { return poses.count(t) > 0; }
};

struct SupervisionSet {
  std::vector<ObjectSupervision> objects;

  std::vector<int> valid_frames() const;  // sorted union over objects
  bool empty() const;
};

// Builds supervision from a fused object: Fused and PoseOnly frames are
// valid; canonical points are subsampled down to max_points (seeded, so the
// choice is reproducible).
ObjectSupervision make_supervision(const CanonicalObject& obj, std::size_t max_points,
                                   std::uint64_t seed);

// Mean over objects of the per-object mean L1 discrepancy between the
// predicted offset at frame t and the rigid target pose(t)*X - X. Throws
// NoSupervision when no object has a pose at t.
double motion_loss(const HexPlaneField& field, const SupervisionSet& sup, int t);

// Mean over planes/scales/interior cells of the squared forward differences
// along both grid axes.
double tv_loss(const HexPlaneField& field);

// Mean L1 norm of the predicted color change over all (point, time) pairs.
double color_reg_loss(const HexPlaneField& field, const std::vector<Vec3>& points,
                      const std::vector<double>& times);

struct LossRecord {
  long iter = 0;
  double motion = 0.0;
  double tv = 0.0;
  double colorreg = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> curve;
};

// Optimizes the field against the supervision: each step samples a valid
// frame and a point batch, computes
//   L = lambda_motion * L_motion * [iter < fraction*total]
//     + lambda_tv * L_tv + lambda_color_reg * L_color_reg,
// backpropagates analytically and applies an adaptive-moment update (plane
// and network learning rates differ). Deterministic for a fixed seed. Throws
// NoSupervision on empty supervision and NonFiniteLoss (with the step index)
// if the loss or gradient stops being finite.
TrainResult train_field(HexPlaneField& field, const SupervisionSet& sup, const TrainConfig& cfg);

// Compares the analytic gradient of the full training loss at frame t against
// central finite differences over every parameter; returns the maximum
// relative error. Intended for small fields.
double grad_check(HexPlaneField& field, const SupervisionSet& sup, int t, double step = 1e-4,
                  const TrainConfig& cfg = {});

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

}  // namespace streetfuse
