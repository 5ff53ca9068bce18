#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "streetfuse/fuse.hpp"
#include "streetfuse/lift.hpp"
#include "streetfuse/motionfield.hpp"
#include "streetfuse/train.hpp"

namespace streetfuse {

// Pipeline configuration, loaded from a single JSON file with sections
// {inputs, lift, fuse, field, train, eval, outputs}. Every numeric default is
// overridable.
struct RunConfig {
  // inputs
  std::filesystem::path calibration;
  std::filesystem::path lidar_dir;
  std::filesystem::path mask_index;  // either an index file ...
  std::filesystem::path mask_dir;    // ... or a directory to scan
  std::filesystem::path gt_dir;      // optional ground truth for eval

  LiftParams lift;
  FuseParams fuse;
  int min_canonical_points = 30;  // objects never exceeding this are dropped

  // field geometry; bounds are derived from the fused clouds at train time
  int field_base_resolution = 64;
  int field_feature_dim = 32;
  int field_hidden_dim = 64;
  std::vector<int> field_scales = {1, 2, 4};
  double field_init_range = 0.1;
  double bounds_padding = 1.0;       // meters around the canonical clouds
  double bounds_padding_time = 2.0;  // frames beyond the observed range

  bool train_enabled = true;
  TrainConfig train;
  std::size_t max_points_per_object = 512;  // supervision subsample

  std::vector<int> export_times;  // deformed snapshots to write

  std::filesystem::path out_dir = "out";
};

RunConfig load_run_config(const std::filesystem::path& path);

// Valid stage names: lift, fuse, train, export, eval.
extern const std::vector<std::string> kPipelineStages;

// Runs the requested stages (all of them when `stages` is empty), reading
// upstream artifacts from cfg.out_dir when a stage is run in isolation.
// Throws ConfigError / IoError / StageError; on ConfigError nothing has been
// written.
void run_pipeline(const RunConfig& cfg, const std::set<std::string>& stages = {});

// Writes one PLY per requested time containing the deformed points.
// Files are named deformed_<t>.ply.
void export_deformed(const HexPlaneField& field, const std::vector<GaussianPoint>& points,
                     const std::vector<int>& times, const std::filesystem::path& out_dir);

// Loads every fused object found under dir (object_<id> subdirectories).
std::vector<CanonicalObject> load_fused_objects(const std::filesystem::path& dir);

}  // namespace streetfuse
