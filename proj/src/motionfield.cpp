#include "streetfuse/motionfield.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "streetfuse/errors.hpp"

namespace streetfuse {

namespace {

constexpr char kMagic[4] = {'H', 'E', 'X', 'P'};
constexpr std::uint32_t kVersion = 1;

double relu(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace

constexpr std::array<std::array<int, 2>, HexPlaneField::kNumPlanes> HexPlaneField::kPlaneAxes;

HexPlaneField::HexPlaneField(const HexPlaneConfig& cfg) : cfg_(cfg) {
  if (cfg_.base_resolution < 2) throw InvalidSpec("base_resolution must be >= 2");
  if (cfg_.feature_dim < 1) throw InvalidSpec("feature_dim must be >= 1");
  if (cfg_.hidden_dim < 1) throw InvalidSpec("hidden_dim must be >= 1");
  if (cfg_.scales.empty()) throw InvalidSpec("scale set must not be empty");
  for (std::size_t s = 0; s < cfg_.scales.size(); ++s) {
    if (cfg_.scales[s] < 1) throw InvalidSpec("scales must be positive");
    if (s > 0 && cfg_.scales[s] <= cfg_.scales[s - 1]) {
      throw InvalidSpec("scales must be strictly ascending");
    }
  }

  std::size_t offset = 0;
  for (std::size_t s = 0; s < cfg_.scales.size(); ++s) {
    for (int p = 0; p < kNumPlanes; ++p) {
      PlaneRef ref;
      ref.offset = offset;
      ref.scale = cfg_.scales[s];
      ref.plane = p;
      ref.res_i = cfg_.scales[s] * cfg_.base_resolution;
      ref.res_j = cfg_.scales[s] * cfg_.base_resolution;
      plane_refs_.push_back(ref);
      offset += static_cast<std::size_t>(ref.res_i) * ref.res_j * cfg_.feature_dim;
    }
  }
  plane_param_end_ = offset;

  auto add_layer = [&](int out, int in) {
    Layer l;
    l.w_offset = offset;
    offset += static_cast<std::size_t>(out) * in;
    l.b_offset = offset;
    offset += static_cast<std::size_t>(out);
    l.out = out;
    l.in = in;
    layers_.push_back(l);
  };
  const int h = cfg_.hidden_dim;
  add_layer(h, concat_size());  // fusion hidden
  add_layer(h, h);              // fusion output
  add_layer(h, h);              // motion decoder hidden 1
  add_layer(h, h);              // motion decoder hidden 2
  add_layer(3, h);              // motion decoder output (zero init)
  add_layer(h, h);              // color decoder hidden 1
  add_layer(h, h);              // color decoder hidden 2
  add_layer(3, h);              // color decoder output (zero init)

  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
  init_params();
}

void HexPlaneField::init_params() {
  std::mt19937_64 rng(cfg_.seed);
  if (cfg_.plane_init == HexPlaneConfig::PlaneInit::Ones) {
    params_.head(static_cast<Eigen::Index>(plane_param_end_)).setOnes();
  } else if (cfg_.plane_init == HexPlaneConfig::PlaneInit::Uniform) {
    std::uniform_real_distribution<double> dist(-cfg_.init_range, cfg_.init_range);
    for (std::size_t i = 0; i < plane_param_end_; ++i) {
      params_[static_cast<Eigen::Index>(i)] = dist(rng);
    }
  } else {
    std::uniform_real_distribution<double> spatial(0.1, 0.5);
    for (const auto& ref : plane_refs_) {
      const bool has_time = kPlaneAxes[ref.plane][1] == 3;
      const std::size_t count =
          static_cast<std::size_t>(ref.res_i) * ref.res_j * cfg_.feature_dim;
      for (std::size_t i = 0; i < count; ++i) {
        params_[static_cast<Eigen::Index>(ref.offset + i)] = has_time ? 1.0 : spatial(rng);
      }
    }
  }
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const bool zero_init = li == 4 || li == 7;  // decoder outputs start as the identity map
    if (zero_init) continue;                    // params_ already zero
    double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < l.out * l.in; ++i) {
      params_[static_cast<Eigen::Index>(l.w_offset) + i] = dist(rng);
    }
    // biases stay zero
  }
}

std::array<double, 4> HexPlaneField::normalize(double x, double y, double z, double t) const {
  const SceneBounds& b = cfg_.bounds;
  std::array<double, 4> raw = {x, y, z, t};
  std::array<double, 4> lo = {b.lo.x(), b.lo.y(), b.lo.z(), b.t_min};
  std::array<double, 4> hi = {b.hi.x(), b.hi.y(), b.hi.z(), b.t_max};
  std::array<double, 4> n;
  static const char* axis_names[4] = {"x", "y", "z", "t"};
  for (int a = 0; a < 4; ++a) {
    if (raw[a] < lo[a] || raw[a] > hi[a]) {
      throw OutOfBounds(std::string("query ") + axis_names[a] + "=" + std::to_string(raw[a]) +
                        " outside scene bounds [" + std::to_string(lo[a]) + ", " +
                        std::to_string(hi[a]) + "]");
    }
    double extent = hi[a] - lo[a];
    n[a] = extent > 0.0 ? (raw[a] - lo[a]) / extent : 0.0;
  }
  return n;
}

void HexPlaneField::forward(const std::vector<Eigen::Vector4d>& queries,
                            Eigen::Matrix3Xd& delta_x, Eigen::Matrix3Xd& delta_c,
                            ForwardCache* cache) const {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const auto Q = static_cast<Eigen::Index>(queries.size());
  const int d = cfg_.feature_dim;
  const int num_scales = static_cast<int>(cfg_.scales.size());

  c.queries = queries;
  c.lookups.assign(num_scales, {});
  c.plane_values.assign(num_scales, {});
  c.concat.resize(concat_size(), Q);

  std::vector<std::array<double, 4>> normalized(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    normalized[q] = normalize(queries[q][0], queries[q][1], queries[q][2], queries[q][3]);
  }

  for (int s = 0; s < num_scales; ++s) {
    const int res = cfg_.scales[s] * cfg_.base_resolution;
    auto& lookups = c.lookups[s];
    lookups.resize(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      for (int a = 0; a < 4; ++a) {
        double g = normalized[q][a] * (res - 1);
        int i0 = std::min(static_cast<int>(std::floor(g)), res - 2);
        lookups[q][a] = {i0, g - i0};
      }
    }
    for (int p = 0; p < kNumPlanes; ++p) {
      const PlaneRef& ref = plane_refs_[static_cast<std::size_t>(s) * kNumPlanes + p];
      Eigen::MatrixXd& vals = c.plane_values[s][p];
      vals.resize(d, Q);
      const double* base = params_.data() + ref.offset;
      const int axis_a = kPlaneAxes[p][0];
      const int axis_b = kPlaneAxes[p][1];
      for (Eigen::Index q = 0; q < Q; ++q) {
        const auto& la = lookups[q][axis_a];
        const auto& lb = lookups[q][axis_b];
        const double fa = la.frac, fb = lb.frac;
        const double w00 = (1 - fa) * (1 - fb);
        const double w10 = fa * (1 - fb);
        const double w01 = (1 - fa) * fb;
        const double w11 = fa * fb;
        const double* p00 = base + (static_cast<std::size_t>(la.i0) * ref.res_j + lb.i0) * d;
        const double* p10 = base + (static_cast<std::size_t>(la.i0 + 1) * ref.res_j + lb.i0) * d;
        const double* p01 = base + (static_cast<std::size_t>(la.i0) * ref.res_j + lb.i0 + 1) * d;
        const double* p11 =
            base + (static_cast<std::size_t>(la.i0 + 1) * ref.res_j + lb.i0 + 1) * d;
        for (int ch = 0; ch < d; ++ch) {
          vals(ch, q) = w00 * p00[ch] + w10 * p10[ch] + w01 * p01[ch] + w11 * p11[ch];
        }
      }
    }
    // Hadamard product across the six planes
    Eigen::MatrixXd prod = c.plane_values[s][0];
    for (int p = 1; p < kNumPlanes; ++p) prod.array() *= c.plane_values[s][p].array();
    c.concat.middleRows(static_cast<Eigen::Index>(s) * d, d) = prod;
  }

  auto run = [&](const Layer& l, const Eigen::MatrixXd& input) {
    return (weight(l) * input).colwise() + bias(l);
  };

  c.fuse_z1 = run(layers_[0], c.concat);
  c.fuse_a1 = c.fuse_z1.unaryExpr([](double v) { return relu(v); });
  c.feature = run(layers_[1], c.fuse_a1);

  c.x_z1 = run(layers_[2], c.feature);
  c.x_a1 = c.x_z1.unaryExpr([](double v) { return relu(v); });
  c.x_z2 = run(layers_[3], c.x_a1);
  c.x_a2 = c.x_z2.unaryExpr([](double v) { return relu(v); });
  delta_x = run(layers_[4], c.x_a2);

  c.c_z1 = run(layers_[5], c.feature);
  c.c_a1 = c.c_z1.unaryExpr([](double v) { return relu(v); });
  c.c_z2 = run(layers_[6], c.c_a1);
  c.c_a2 = c.c_z2.unaryExpr([](double v) { return relu(v); });
  delta_c = run(layers_[7], c.c_a2);
}

void HexPlaneField::backward(const ForwardCache& c, const Eigen::Matrix3Xd& d_delta_x,
                             const Eigen::Matrix3Xd& d_delta_c, Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) {
    throw InvalidSpec("gradient buffer size does not match parameter count");
  }
  const int d = cfg_.feature_dim;
  const int num_scales = static_cast<int>(cfg_.scales.size());

  using RowMajorMap =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  auto grad_weight = [&](const Layer& l) {
    return RowMajorMap(grad.data() + l.w_offset, l.out, l.in);
  };
  auto grad_bias = [&](const Layer& l) {
    return Eigen::Map<Eigen::VectorXd>(grad.data() + l.b_offset, l.out);
  };

  // d_out: gradient w.r.t. a layer's output; returns gradient w.r.t. input
  auto back_linear = [&](const Layer& l, const Eigen::MatrixXd& input,
                         const Eigen::MatrixXd& d_out) {
    grad_weight(l) += d_out * input.transpose();
    grad_bias(l) += d_out.rowwise().sum();
    return Eigen::MatrixXd(weight(l).transpose() * d_out);
  };
  auto relu_mask = [](const Eigen::MatrixXd& z, Eigen::MatrixXd& d) {
    d = (z.array() > 0.0).select(d, 0.0);
  };

  // motion decoder
  Eigen::MatrixXd dxa2 = back_linear(layers_[4], c.x_a2, d_delta_x);
  relu_mask(c.x_z2, dxa2);
  Eigen::MatrixXd dxa1 = back_linear(layers_[3], c.x_a1, dxa2);
  relu_mask(c.x_z1, dxa1);
  Eigen::MatrixXd d_feature = back_linear(layers_[2], c.feature, dxa1);

  // color decoder
  Eigen::MatrixXd dca2 = back_linear(layers_[7], c.c_a2, d_delta_c);
  relu_mask(c.c_z2, dca2);
  Eigen::MatrixXd dca1 = back_linear(layers_[6], c.c_a1, dca2);
  relu_mask(c.c_z1, dca1);
  d_feature += back_linear(layers_[5], c.feature, dca1);

  // fusion
  Eigen::MatrixXd d_a1 = back_linear(layers_[1], c.fuse_a1, d_feature);
  relu_mask(c.fuse_z1, d_a1);
  Eigen::MatrixXd d_concat = back_linear(layers_[0], c.concat, d_a1);

  // planes: product rule via prefix/suffix products, then bilinear corners
  const auto Q = static_cast<Eigen::Index>(c.queries.size());
  for (int s = 0; s < num_scales; ++s) {
    Eigen::MatrixXd d_prod = d_concat.middleRows(static_cast<Eigen::Index>(s) * d, d);
    std::array<Eigen::MatrixXd, kNumPlanes + 1> prefix;
    std::array<Eigen::MatrixXd, kNumPlanes + 1> suffix;
    prefix[0] = Eigen::MatrixXd::Ones(d, Q);
    for (int p = 0; p < kNumPlanes; ++p) {
      prefix[p + 1] = prefix[p].array() * c.plane_values[s][p].array();
    }
    suffix[kNumPlanes] = Eigen::MatrixXd::Ones(d, Q);
    for (int p = kNumPlanes - 1; p >= 0; --p) {
      suffix[p] = suffix[p + 1].array() * c.plane_values[s][p].array();
    }
    for (int p = 0; p < kNumPlanes; ++p) {
      const PlaneRef& ref = plane_refs_[static_cast<std::size_t>(s) * kNumPlanes + p];
      Eigen::MatrixXd d_vals = d_prod.array() * prefix[p].array() * suffix[p + 1].array();
      double* gbase = grad.data() + ref.offset;
      const int axis_a = kPlaneAxes[p][0];
      const int axis_b = kPlaneAxes[p][1];
      for (Eigen::Index q = 0; q < Q; ++q) {
        const auto& la = c.lookups[s][q][axis_a];
        const auto& lb = c.lookups[s][q][axis_b];
        const double fa = la.frac, fb = lb.frac;
        const double w00 = (1 - fa) * (1 - fb);
        const double w10 = fa * (1 - fb);
        const double w01 = (1 - fa) * fb;
        const double w11 = fa * fb;
        double* g00 = gbase + (static_cast<std::size_t>(la.i0) * ref.res_j + lb.i0) * d;
        double* g10 = gbase + (static_cast<std::size_t>(la.i0 + 1) * ref.res_j + lb.i0) * d;
        double* g01 = gbase + (static_cast<std::size_t>(la.i0) * ref.res_j + lb.i0 + 1) * d;
        double* g11 = gbase + (static_cast<std::size_t>(la.i0 + 1) * ref.res_j + lb.i0 + 1) * d;
        for (int ch = 0; ch < d; ++ch) {
          const double g = d_vals(ch, q);
          g00[ch] += w00 * g;
          g10[ch] += w10 * g;
          g01[ch] += w01 * g;
          g11[ch] += w11 * g;
        }
      }
    }
  }
}

Eigen::VectorXd HexPlaneField::query_plane_features(double x, double y, double z,
                                                    double t) const {
  ForwardCache cache;
  Eigen::Matrix3Xd dx, dc;
  forward({Eigen::Vector4d(x, y, z, t)}, dx, dc, &cache);
  return cache.concat.col(0);
}

Eigen::VectorXd HexPlaneField::query_features(double x, double y, double z, double t) const {
  ForwardCache cache;
  Eigen::Matrix3Xd dx, dc;
  forward({Eigen::Vector4d(x, y, z, t)}, dx, dc, &cache);
  return cache.feature.col(0);
}

Deformation HexPlaneField::decode(const Eigen::VectorXd& feature) const {
  if (feature.size() != cfg_.hidden_dim) {
    throw InvalidSpec("decode: feature length must equal hidden_dim");
  }
  auto run = [&](const Layer& l, const Eigen::VectorXd& input) {
    return Eigen::VectorXd(weight(l) * input + bias(l));
  };
  auto relu_vec = [](Eigen::VectorXd v) {
    return Eigen::VectorXd(v.unaryExpr([](double x) { return relu(x); }));
  };
  Deformation out;
  Eigen::VectorXd a = relu_vec(run(layers_[2], feature));
  a = relu_vec(run(layers_[3], a));
  out.delta_x = run(layers_[4], a);
  Eigen::VectorXd b = relu_vec(run(layers_[5], feature));
  b = relu_vec(run(layers_[6], b));
  out.delta_c = run(layers_[7], b);
  return out;
}

Deformation HexPlaneField::query_deformation(double x, double y, double z, double t) const {
  Eigen::Matrix3Xd dx, dc;
  forward({Eigen::Vector4d(x, y, z, t)}, dx, dc, nullptr);
  return {dx.col(0), dc.col(0)};
}

std::vector<GaussianPoint> HexPlaneField::deform_points(const std::vector<GaussianPoint>& points,
                                                        double t) const {
  std::vector<Eigen::Vector4d> queries;
  queries.reserve(points.size());
  for (const auto& p : points) {
    queries.emplace_back(p.center.x(), p.center.y(), p.center.z(), t);
  }
  Eigen::Matrix3Xd dx, dc;
  forward(queries, dx, dc, nullptr);
  std::vector<GaussianPoint> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = points[i];
    out[i].center += dx.col(static_cast<Eigen::Index>(i));
    Vec3 color = points[i].color + dc.col(static_cast<Eigen::Index>(i));
    out[i].color = color.cwiseMax(0.0).cwiseMin(1.0);
  }
  return out;
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
HexPlaneField::weight(const Layer& l) const {
  return {params_.data() + l.w_offset, l.out, l.in};
}

Eigen::Map<const Eigen::VectorXd> HexPlaneField::bias(const Layer& l) const {
  return {params_.data() + l.b_offset, l.out};
}

void HexPlaneField::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  out.write(kMagic, 4);
  put_u32(kVersion);
  put_u32(static_cast<std::uint32_t>(cfg_.base_resolution));
  put_u32(static_cast<std::uint32_t>(cfg_.feature_dim));
  put_u32(static_cast<std::uint32_t>(cfg_.hidden_dim));
  put_u32(static_cast<std::uint32_t>(cfg_.scales.size()));
  for (int s : cfg_.scales) put_u32(static_cast<std::uint32_t>(s));
  const SceneBounds& b = cfg_.bounds;
  put_f64(b.lo.x());
  put_f64(b.hi.x());
  put_f64(b.lo.y());
  put_f64(b.hi.y());
  put_f64(b.lo.z());
  put_f64(b.hi.z());
  put_f64(b.t_min);
  put_f64(b.t_max);
  std::vector<float> buf(params_.size());
  for (Eigen::Index i = 0; i < params_.size(); ++i) buf[i] = static_cast<float>(params_[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("short write to " + path.string());
}

HexPlaneField HexPlaneField::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(path.string() + ": not a HexPlane checkpoint");
  }
  auto get_u32 = [&]() {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw IoError(path.string() + ": truncated checkpoint");
    return v;
  };
  auto get_f64 = [&]() {
    double v;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw IoError(path.string() + ": truncated checkpoint");
    return v;
  };
  std::uint32_t version = get_u32();
  if (version != kVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  HexPlaneConfig cfg;
  cfg.base_resolution = static_cast<int>(get_u32());
  cfg.feature_dim = static_cast<int>(get_u32());
  cfg.hidden_dim = static_cast<int>(get_u32());
  std::uint32_t scale_count = get_u32();
  cfg.scales.clear();
  for (std::uint32_t i = 0; i < scale_count; ++i) cfg.scales.push_back(static_cast<int>(get_u32()));
  cfg.bounds.lo.x() = get_f64();
  cfg.bounds.hi.x() = get_f64();
  cfg.bounds.lo.y() = get_f64();
  cfg.bounds.hi.y() = get_f64();
  cfg.bounds.lo.z() = get_f64();
  cfg.bounds.hi.z() = get_f64();
  cfg.bounds.t_min = get_f64();
  cfg.bounds.t_max = get_f64();
  HexPlaneField field(cfg);
  std::vector<float> buf(field.params_.size());
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw IoError(path.string() + ": truncated parameter block");
  for (Eigen::Index i = 0; i < field.params_.size(); ++i) field.params_[i] = buf[i];
  return field;
}

}  // namespace streetfuse
