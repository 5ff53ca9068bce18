#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "streetfuse/errors.hpp"
#include "streetfuse/eval.hpp"
#include "streetfuse/io.hpp"
#include "streetfuse/pipeline.hpp"
#include "streetfuse/simgen.hpp"
#include "streetfuse/train.hpp"

namespace fs = std::filesystem;
using namespace streetfuse;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitStage = 4;

int cmd_run(const std::string& config_path, const std::string& stage, long seed_override,
            const std::string& out_override) {
  RunConfig cfg = load_run_config(config_path);
  if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  std::set<std::string> stages;
  if (!stage.empty()) stages.insert(stage);
  run_pipeline(cfg, stages);
  std::cout << "pipeline finished, outputs under " << cfg.out_dir.string() << "\n";
  return 0;
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir, long seed_override) {
  SceneSpec spec = load_scene_spec(spec_path);
  if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
  SceneTruth truth = generate_scene(spec);
  write_scene(truth, out_dir);
  std::cout << "scene written to " << out_dir << " (" << spec.objects.size() << " objects, "
            << spec.frames << " frames, " << spec.rig.cameras.size() << " cameras)\n";
  return 0;
}

int cmd_eval(const std::string& est_dir, const std::string& gt_dir, const std::string& out_dir) {
  auto objects = load_fused_objects(est_dir);
  fs::create_directories(out_dir);
  std::map<int, TrajectoryError> errors;
  for (const auto& obj : objects) {
    fs::path gt_file =
        fs::path(gt_dir) / ("object_" + std::to_string(obj.object_id)) / "trajectory.json";
    if (!fs::exists(gt_file)) {
      std::cerr << "warning: no ground truth for object " << obj.object_id << "\n";
      continue;
    }
    std::map<int, RigidPose> gt_poses;
    std::vector<int> gt_frames;
    for (const auto& e : load_trajectory(gt_file)) {
      if (e.pose) {
        gt_poses[e.t] = *e.pose;
        gt_frames.push_back(e.t);
      }
    }
    TrajectoryError err = trajectory_error(obj, gt_poses, gt_frames);
    errors[obj.object_id] = err;
    write_error_csv(fs::path(out_dir) / ("errors_object_" + std::to_string(obj.object_id) + ".csv"),
                    err);
    write_error_hist_csv(
        fs::path(out_dir) / ("hist_object_" + std::to_string(obj.object_id) + ".csv"), err);
    std::printf("object %d: mean translation %.4f m, mean rotation %.3f deg, missing %d/%zu\n",
                obj.object_id, err.mean_translation, err.mean_rotation, err.missing_count,
                err.frames.size());
  }
  if (errors.empty()) throw StageError("eval", "no objects matched ground truth");
  write_error_summary_csv(fs::path(out_dir) / "summary.csv", errors);
  return 0;
}

int cmd_gradcheck(int num_fields, long seed, double tolerance) {
  bool all_ok = true;
  for (int i = 0; i < num_fields; ++i) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + static_cast<std::uint64_t>(i));
    HexPlaneConfig fc;
    fc.base_resolution = 4;
    fc.feature_dim = 4;
    fc.hidden_dim = 16;
    fc.scales = {1, 2};
    fc.bounds.lo = Vec3(-1, -1, -1);
    fc.bounds.hi = Vec3(1, 1, 1);
    fc.bounds.t_min = 0.0;
    fc.bounds.t_max = 4.0;
    fc.seed = rng();
    HexPlaneField field(fc);

    SupervisionSet sup;
    ObjectSupervision obj;
    obj.object_id = 1;
    std::uniform_real_distribution<double> unit(-0.8, 0.8);
    for (int p = 0; p < 12; ++p) obj.points.emplace_back(unit(rng), unit(rng), unit(rng));
    RigidPose pose;
    pose.translation = Vec3(0.1, -0.05, 0.02);
    obj.poses[2] = pose;
    sup.objects.push_back(obj);

    double err = grad_check(field, sup, 2);
    std::printf("field %d: max relative gradient error %.3e\n", i, err);
    if (!(err < tolerance)) all_ok = false;
  }
  if (!all_ok) {
    std::cerr << "gradient check failed (tolerance " << tolerance << ")\n";
    return kExitStage;
  }
  std::cout << "all gradient checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streetfuse: dynamic-object reconstruction from mask tracks and LiDAR"};
  app.require_subcommand(1);

  std::string config_path, stage, out_override;
  long seed = -1;
  auto* run = app.add_subcommand("run", "run the pipeline from a JSON config");
  run->add_option("config", config_path, "pipeline config JSON")->required();
  run->add_option("--stage", stage, "run a single stage (lift|fuse|train|export|eval)");
  run->add_option("--seed", seed, "override the training seed");
  run->add_option("--out", out_override, "override the output directory");

  std::string spec_path, gen_out = "scene";
  long gen_seed = -1;
  auto* gen = app.add_subcommand("gen", "generate a synthetic scene from a spec");
  gen->add_option("spec", spec_path, "scene spec JSON")->required();
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "override the scene seed");

  std::string est_dir, gt_dir, eval_out = "eval";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate trajectories against ground truth");
  eval_cmd->add_option("est_dir", est_dir, "directory with object_<id>/trajectory.json")
      ->required();
  eval_cmd->add_option("gt_dir", gt_dir, "ground-truth directory")->required();
  eval_cmd->add_option("--out", eval_out, "output directory for CSVs");

  int gc_fields = 10;
  long gc_seed = 12345;
  double gc_tol = 1e-4;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "verify analytic gradients");
  gradcheck_cmd->add_option("--fields", gc_fields, "number of random fields");
  gradcheck_cmd->add_option("--seed", gc_seed, "base seed");
  gradcheck_cmd->add_option("--tolerance", gc_tol, "max relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, stage, seed, out_override);
    if (gen->parsed()) return cmd_gen(spec_path, gen_out, gen_seed);
    if (eval_cmd->parsed()) return cmd_eval(est_dir, gt_dir, eval_out);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_fields, gc_seed, gc_tol);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidSpec& e) {
    std::cerr << "invalid spec: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const StageError& e) {
    std::cerr << "stage error: " << e.what() << "\n";
    return kExitStage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
