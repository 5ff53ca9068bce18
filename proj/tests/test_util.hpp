#pragma once

#include <cmath>
#include <random>

#include "streetfuse/geom.hpp"

// Shared helpers for tests. Rotations are built with straight-line Rodrigues
// code so they stay independent of the library's own rotation handling.
namespace testutil {

using streetfuse::Mat3;
using streetfuse::RigidPose;
using streetfuse::Vec3;

inline Mat3 rodrigues(const Vec3& axis_in, double angle_rad) {
  Vec3 axis = axis_in.normalized();
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + s * k + (1.0 - c) * k * k;
}

inline Vec3 random_unit_vec(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v(gauss(rng), gauss(rng), gauss(rng));
  while (v.norm() < 1e-6) v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  return v.normalized();
}

inline RigidPose random_pose(std::mt19937_64& rng, double max_angle_rad = M_PI,
                             double max_translation = 1.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RigidPose p;
  p.rotation = rodrigues(random_unit_vec(rng), unit(rng) * max_angle_rad);
  p.translation = random_unit_vec(rng) * unit(rng) * max_translation;
  return p;
}

inline Vec3 random_point_in_box(std::mt19937_64& rng, const Vec3& lo, const Vec3& hi) {
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> uz(lo.z(), hi.z());
  return {ux(rng), uy(rng), uz(rng)};
}

}  // namespace testutil
