#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "streetfuse/geom.hpp"

namespace streetfuse {

// Isotropic Gaussian primitive: one scale for all axes, identity rotation,
// view-independent RGB color.
struct GaussianPoint {
  Vec3 center = Vec3::Zero();
  Vec3 color = Vec3::Constant(0.5);
  double scale = 0.05;
  double opacity = 0.5;
};

// Per-point deformation at a time step: position offset plus color change.
struct Deformation {
  Vec3 delta_x = Vec3::Zero();
  Vec3 delta_c = Vec3::Zero();
};

// Axis-aligned scene box plus time range. Queries outside are errors; the
// caller clamps explicitly if that is what it wants.
struct SceneBounds {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  double t_min = 0.0;
  double t_max = 1.0;
};

struct HexPlaneConfig {
  int base_resolution = 64;
  int feature_dim = 32;  // d, channels per plane
  int hidden_dim = 64;   // h, fusion output and MLP width
  std::vector<int> scales = {1, 2, 4};
  SceneBounds bounds;
  // TimeOnes: spatial planes uniform in [0.1, 0.5], planes with a time axis
  // at 1.0. Six-way Hadamard products stay away from zero this way; a
  // zero-symmetric init leaves the product (and its gradients) dead.
  // Uniform: symmetric in [-init_range, init_range]. Ones: multiplicative
  // identity, for tests.
  enum class PlaneInit { TimeOnes, Uniform, Ones };
  PlaneInit plane_init = PlaneInit::TimeOnes;
  double init_range = 0.1;
  std::uint64_t seed = 0;
};

// Spatio-temporal feature field factored into six 2D planes per scale
// (xy, xz, yz, xt, yt, zt). A query bilinearly interpolates each plane,
// multiplies the six results elementwise per scale, concatenates across
// scales, and fuses through a small MLP. Two decoder MLPs turn the fused
// feature into a position offset and a color change. All parameters live in
// one flat vector so the optimizer and the checkpoint format can treat them
// uniformly; plane parameters come first.
class HexPlaneField {
 public:
  explicit HexPlaneField(const HexPlaneConfig& cfg);

  static constexpr int kNumPlanes = 6;
  // axis pairs per plane, axes 0..3 = x, y, z, t
  static constexpr std::array<std::array<int, 2>, kNumPlanes> kPlaneAxes = {
      {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

  const HexPlaneConfig& config() const { return cfg_; }
  int feature_size() const { return cfg_.hidden_dim; }
  int concat_size() const { return static_cast<int>(cfg_.scales.size()) * cfg_.feature_dim; }

  // --- single-query interface ---

  // Hadamard product per scale, concatenated across scales (length scales*d).
  Eigen::VectorXd query_plane_features(double x, double y, double z, double t) const;

  // Full fused feature (length h). Throws OutOfBounds outside scene bounds.
  Eigen::VectorXd query_features(double x, double y, double z, double t) const;

  // Runs both decoders on a fused feature of length h.
  Deformation decode(const Eigen::VectorXd& feature) const;

  Deformation query_deformation(double x, double y, double z, double t) const;

  // Applies the field to Gaussian points at time t: center moves by delta_x,
  // color moves by delta_c and is clamped to [0,1], scale/opacity untouched.
  std::vector<GaussianPoint> deform_points(const std::vector<GaussianPoint>& points,
                                           double t) const;

  // --- batched training interface ---

  struct ForwardCache;

  // Forward pass over a batch of (x,y,z,t) queries. Returns 3xQ position and
  // color deltas. When cache is non-null, intermediates for the backward pass
  // are retained.
  void forward(const std::vector<Eigen::Vector4d>& queries, Eigen::Matrix3Xd& delta_x,
               Eigen::Matrix3Xd& delta_c, ForwardCache* cache) const;

  // Accumulates dLoss/dparam into `grad` (same layout as params()) given the
  // loss gradients w.r.t. the batch outputs.
  void backward(const ForwardCache& cache, const Eigen::Matrix3Xd& d_delta_x,
                const Eigen::Matrix3Xd& d_delta_c, Eigen::VectorXd& grad) const;

  // --- parameter access ---

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }
  // plane parameters occupy [0, plane_param_count); MLP weights follow
  std::size_t plane_param_count() const { return plane_param_end_; }

  struct PlaneRef {
    std::size_t offset;  // into params()
    int scale;
    int plane;  // 0..5
    int res_i;
    int res_j;
  };
  const std::vector<PlaneRef>& planes() const { return plane_refs_; }

  // --- checkpoint I/O ---

  void save(const std::filesystem::path& path) const;
  static HexPlaneField load(const std::filesystem::path& path);

 private:
  struct Layer {
    std::size_t w_offset;
    std::size_t b_offset;
    int out;
    int in;
  };

  // normalized [0,1] coordinates; throws OutOfBounds
  std::array<double, 4> normalize(double x, double y, double z, double t) const;

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  weight(const Layer& l) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Layer& l) const;

  void init_params();

  HexPlaneConfig cfg_;
  Eigen::VectorXd params_;
  std::size_t plane_param_end_ = 0;
  std::vector<PlaneRef> plane_refs_;
  // layer order: fusion (2 layers), motion decoder (3), color decoder (3)
  std::vector<Layer> layers_;

  friend struct FieldBackdoor;  // test hook
};

struct HexPlaneField::ForwardCache {
  std::vector<Eigen::Vector4d> queries;
  // per scale: corner indices/fractions per axis, per query
  struct AxisLookup {
    int i0;
    double frac;
  };
  std::vector<std::vector<std::array<AxisLookup, 4>>> lookups;  // [scale][query][axis]
  // interpolated plane vectors, [scale][plane]: d x Q
  std::vector<std::array<Eigen::MatrixXd, kNumPlanes>> plane_values;
  Eigen::MatrixXd concat;  // (scales*d) x Q
  Eigen::MatrixXd fuse_z1, fuse_a1, feature;
  Eigen::MatrixXd x_z1, x_a1, x_z2, x_a2;
  Eigen::MatrixXd c_z1, c_a1, c_z2, c_a2;
};

}  // namespace streetfuse
