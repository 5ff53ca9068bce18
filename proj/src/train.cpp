#include "streetfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "streetfuse/errors.hpp"

namespace streetfuse {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// One sampled batch: queries plus per-query weights for the loss gradients.
struct Batch {
  std::vector<Eigen::Vector4d> queries;
  std::vector<Vec3> targets;        // rigid offsets pose(t)*X - X
  std::vector<double> motion_coef;  // (1/objects)/(points in object), per query
};

Batch full_batch(const SupervisionSet& sup, int t) {
  Batch b;
  std::size_t active = 0;
  for (const auto& obj : sup.objects) {
    if (obj.valid_at(t) && !obj.points.empty()) ++active;
  }
  if (active == 0) throw NoSupervision("no object has a pose at frame " + std::to_string(t));
  for (const auto& obj : sup.objects) {
    if (!obj.valid_at(t) || obj.points.empty()) continue;
    const RigidPose& pose = obj.poses.at(t);
    double coef = 1.0 / (static_cast<double>(active) * static_cast<double>(obj.points.size()));
    for (const auto& p : obj.points) {
      b.queries.emplace_back(p.x(), p.y(), p.z(), static_cast<double>(t));
      b.targets.push_back(pose.apply(p) - p);
      b.motion_coef.push_back(coef);
    }
  }
  return b;
}

// Proportional allocation of the batch budget across objects valid at t,
// then uniform sampling without replacement inside each object.
Batch sampled_batch(const SupervisionSet& sup, int t, int budget, std::mt19937_64& rng) {
  std::vector<const ObjectSupervision*> active;
  for (const auto& obj : sup.objects) {
    if (obj.valid_at(t) && !obj.points.empty()) active.push_back(&obj);
  }
  if (active.empty()) throw NoSupervision("no object has a pose at frame " + std::to_string(t));

  std::size_t total = 0;
  for (const auto* obj : active) total += obj->points.size();
  if (budget <= 0 || static_cast<std::size_t>(budget) >= total) return full_batch(sup, t);

  // largest-remainder split of the budget, proportional to object size
  std::vector<std::size_t> quota(active.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    double exact = static_cast<double>(budget) * static_cast<double>(active[i]->points.size()) /
                   static_cast<double>(total);
    quota[i] = std::min(active[i]->points.size(), static_cast<std::size_t>(std::floor(exact)));
    assigned += quota[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [rem, i] : remainders) {
    if (assigned >= static_cast<std::size_t>(budget)) break;
    if (quota[i] < active[i]->points.size()) {
      ++quota[i];
      ++assigned;
    }
  }

  Batch b;
  for (std::size_t i = 0; i < active.size(); ++i) {
    const auto& obj = *active[i];
    std::size_t n = obj.points.size();
    std::size_t k = std::max<std::size_t>(quota[i], 1);
    // partial Fisher-Yates over an index vector
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, n - 1);
      std::swap(idx[j], idx[pick(rng)]);
    }
    const RigidPose& pose = obj.poses.at(t);
    double coef = 1.0 / (static_cast<double>(active.size()) * static_cast<double>(k));
    for (std::size_t j = 0; j < k; ++j) {
      const Vec3& p = obj.points[idx[j]];
      b.queries.emplace_back(p.x(), p.y(), p.z(), static_cast<double>(t));
      b.targets.push_back(pose.apply(p) - p);
      b.motion_coef.push_back(coef);
    }
  }
  return b;
}

struct TvAccum {
  double value = 0.0;
};

// TV value, and optionally its gradient scaled by lambda added into grad.
double tv_eval(const HexPlaneField& field, double lambda, Eigen::VectorXd* grad) {
  const int d = field.config().feature_dim;
  const auto& params = field.params();
  std::size_t count = 0;
  for (const auto& ref : field.planes()) {
    count += static_cast<std::size_t>(ref.res_i - 1) * static_cast<std::size_t>(ref.res_j - 1);
  }
  if (count == 0) return 0.0;
  const double inv_count = 1.0 / static_cast<double>(count);
  double sum = 0.0;
  for (const auto& ref : field.planes()) {
    const double* base = params.data() + ref.offset;
    double* gbase = grad ? grad->data() + ref.offset : nullptr;
    const std::size_t row = static_cast<std::size_t>(ref.res_j) * d;
    for (int i = 1; i < ref.res_i; ++i) {
      for (int j = 1; j < ref.res_j; ++j) {
        const std::size_t at = i * row + static_cast<std::size_t>(j) * d;
        const std::size_t up = at - row;
        const std::size_t left = at - d;
        for (int ch = 0; ch < d; ++ch) {
          const double dv = base[at + ch] - base[up + ch];
          const double dh = base[at + ch] - base[left + ch];
          sum += dv * dv + dh * dh;
          if (gbase) {
            const double gv = lambda * 2.0 * dv * inv_count;
            const double gh = lambda * 2.0 * dh * inv_count;
            gbase[at + ch] += gv + gh;
            gbase[up + ch] -= gv;
            gbase[left + ch] -= gh;
          }
        }
      }
    }
  }
  return sum * inv_count;
}

struct StepLosses {
  double motion = 0.0;
  double colorreg = 0.0;
};

// Forward + loss-derivative assembly for one batch. When grad != nullptr the
// full analytic gradient (motion + color-reg + tv) is accumulated.
StepLosses batch_losses(const HexPlaneField& field, const Batch& batch, bool motion_on,
                        const TrainConfig& cfg, Eigen::VectorXd* grad) {
  StepLosses losses;
  const auto Q = static_cast<Eigen::Index>(batch.queries.size());
  HexPlaneField::ForwardCache cache;
  Eigen::Matrix3Xd dx, dc;
  field.forward(batch.queries, dx, dc, grad ? &cache : nullptr);

  Eigen::Matrix3Xd d_dx = Eigen::Matrix3Xd::Zero(3, Q);
  Eigen::Matrix3Xd d_dc = Eigen::Matrix3Xd::Zero(3, Q);

  if (motion_on) {
    for (Eigen::Index q = 0; q < Q; ++q) {
      Vec3 diff = Vec3(dx.col(q)) - batch.targets[static_cast<std::size_t>(q)];
      const double coef = batch.motion_coef[static_cast<std::size_t>(q)];
      losses.motion += coef * diff.cwiseAbs().sum();
      if (grad) {
        for (int k = 0; k < 3; ++k) {
          d_dx(k, q) = cfg.lambda_motion * coef * sign(diff[k]);
        }
      }
    }
  }

  const double inv_q = Q > 0 ? 1.0 / static_cast<double>(Q) : 0.0;
  for (Eigen::Index q = 0; q < Q; ++q) {
    losses.colorreg += inv_q * dc.col(q).cwiseAbs().sum();
    if (grad) {
      for (int k = 0; k < 3; ++k) {
        d_dc(k, q) = cfg.lambda_color_reg * inv_q * sign(dc(k, q));
      }
    }
  }

  if (grad) field.backward(cache, d_dx, d_dc, *grad);
  return losses;
}

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, std::size_t plane_end, const TrainConfig& cfg)
      : m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        plane_end_(plane_end),
        cfg_(cfg) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      const double lr =
          static_cast<std::size_t>(i) < plane_end_ ? cfg_.lr_planes : cfg_.lr_networks;
      params[i] -= lr_scale * lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }

 private:
  Eigen::VectorXd m_, v_;
  long t_ = 0;
  std::size_t plane_end_;
  TrainConfig cfg_;
};

}  // namespace

std::vector<int> SupervisionSet::valid_frames() const {
  std::set<int> frames;
  for (const auto& obj : objects) {
    for (const auto& [t, pose] : obj.poses) frames.insert(t);
  }
  return {frames.begin(), frames.end()};
}

bool SupervisionSet::empty() const {
  for (const auto& obj : objects) {
    if (!obj.points.empty() && !obj.poses.empty()) return false;
  }
  return true;
}

ObjectSupervision make_supervision(const CanonicalObject& obj, std::size_t max_points,
                                   std::uint64_t seed) {
  ObjectSupervision sup;
  sup.object_id = obj.object_id;
  for (const auto& [t, st] : obj.status) {
    if (st == FrameStatus::Fused || st == FrameStatus::PoseOnly) {
      sup.poses[t] = obj.poses.at(t);
    }
  }
  const auto& pts = obj.canonical_cloud.positions;
  if (pts.size() <= max_points) {
    sup.points = pts;
    return sup;
  }
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(obj.object_id + 1)));
  for (std::size_t j = 0; j < max_points; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, pts.size() - 1);
    std::swap(idx[j], idx[pick(rng)]);
  }
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  sup.points.reserve(max_points);
  for (std::size_t i : idx) sup.points.push_back(pts[i]);
  return sup;
}

double motion_loss(const HexPlaneField& field, const SupervisionSet& sup, int t) {
  Batch batch = full_batch(sup, t);
  TrainConfig cfg;
  return batch_losses(field, batch, true, cfg, nullptr).motion;
}

double tv_loss(const HexPlaneField& field) { return tv_eval(field, 0.0, nullptr); }

double color_reg_loss(const HexPlaneField& field, const std::vector<Vec3>& points,
                      const std::vector<double>& times) {
  if (points.empty() || times.empty()) return 0.0;
  std::vector<Eigen::Vector4d> queries;
  queries.reserve(points.size() * times.size());
  for (double t : times) {
    for (const auto& p : points) queries.emplace_back(p.x(), p.y(), p.z(), t);
  }
  Eigen::Matrix3Xd dx, dc;
  field.forward(queries, dx, dc, nullptr);
  double sum = 0.0;
  for (Eigen::Index q = 0; q < dc.cols(); ++q) sum += dc.col(q).cwiseAbs().sum();
  return sum / static_cast<double>(dc.cols());
}

TrainResult train_field(HexPlaneField& field, const SupervisionSet& sup, const TrainConfig& cfg) {
  if (sup.empty()) throw NoSupervision("train_field: empty supervision");
  const std::vector<int> frames = sup.valid_frames();
  if (frames.empty()) throw NoSupervision("train_field: no valid frames");

  std::mt19937_64 rng(cfg.seed);
  AdamOptimizer adam(field.param_count(), field.plane_param_count(), cfg);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(field.param_count()));

  TrainResult result;
  result.curve.reserve(static_cast<std::size_t>(cfg.iterations));
  const long motion_until =
      static_cast<long>(cfg.motion_phase_fraction * static_cast<double>(cfg.iterations));

  auto lr_scale = [&](long iter) {
    if (cfg.lr_schedule == TrainConfig::LrSchedule::Constant) return 1.0;
    const double horizon =
        std::max(1.0, cfg.lr_decay_horizon * static_cast<double>(cfg.iterations));
    const double u = std::min(1.0, static_cast<double>(iter) / horizon);
    const double cosine = 0.5 * (1.0 + std::cos(M_PI * u));
    return cfg.lr_floor_fraction + (1.0 - cfg.lr_floor_fraction) * cosine;
  };

  for (long iter = 0; iter < cfg.iterations; ++iter) {
    std::uniform_int_distribution<std::size_t> pick_frame(0, frames.size() - 1);
    const int t = frames[pick_frame(rng)];
    const bool motion_on = iter < motion_until;

    Batch batch = sampled_batch(sup, t, cfg.batch, rng);
    grad.setZero();
    StepLosses losses = batch_losses(field, batch, motion_on, cfg, &grad);
    const double tv = tv_eval(field, cfg.lambda_tv, &grad);

    LossRecord rec;
    rec.iter = iter;
    rec.motion = motion_on ? losses.motion : 0.0;
    rec.tv = tv;
    rec.colorreg = losses.colorreg;
    rec.total = (motion_on ? cfg.lambda_motion * losses.motion : 0.0) + cfg.lambda_tv * tv +
                cfg.lambda_color_reg * losses.colorreg;
    if (!std::isfinite(rec.total)) {
      throw NonFiniteLoss("non-finite loss at step " + std::to_string(iter), iter);
    }
    if (!grad.allFinite()) {
      throw NonFiniteLoss("non-finite gradient at step " + std::to_string(iter), iter);
    }

    adam.step(field.params(), grad, lr_scale(iter));
    result.curve.push_back(rec);
  }
  return result;
}

double grad_check(HexPlaneField& field, const SupervisionSet& sup, int t, double step,
                  const TrainConfig& cfg) {
  Batch batch = full_batch(sup, t);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(field.param_count()));
  StepLosses losses = batch_losses(field, batch, true, cfg, &grad);
  tv_eval(field, cfg.lambda_tv, &grad);
  (void)losses;

  auto total_loss = [&]() {
    StepLosses l = batch_losses(field, batch, true, cfg, nullptr);
    return cfg.lambda_motion * l.motion + cfg.lambda_color_reg * l.colorreg +
           cfg.lambda_tv * tv_eval(field, 0.0, nullptr);
  };

  Eigen::VectorXd& params = field.params();
  auto rel_error_at = [&](Eigen::Index i, double h) {
    const double saved = params[i];
    params[i] = saved + h;
    const double lp = total_loss();
    params[i] = saved - h;
    const double lm = total_loss();
    params[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    return std::abs(fd - grad[i]) / denom;
  };

  double max_rel = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    double rel = rel_error_at(i, step);
    // The loss is piecewise smooth (ReLU, L1): a difference interval that
    // straddles a kink reports the averaged slope. Re-test offenders with
    // shrinking steps; a genuine analytic error fails at every step.
    for (double h = step / 10.0; rel >= 1e-4 && h >= step / 1000.0; h /= 10.0) {
      rel = std::min(rel, rel_error_at(i, h));
    }
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iter,motion,tv,colorreg,total\n";
  char buf[160];
  for (const auto& rec : curve) {
    std::snprintf(buf, sizeof(buf), "%ld,%.10g,%.10g,%.10g,%.10g\n", rec.iter, rec.motion, rec.tv,
                  rec.colorreg, rec.total);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace streetfuse
