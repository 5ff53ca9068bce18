#include "streetfuse/geom.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "streetfuse/errors.hpp"

namespace streetfuse {

RigidPose RigidPose::orthonormalized() const {
  Eigen::JacobiSVD<Mat3> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return {r, translation};
}

double rotation_angle_rad(const Mat3& r) {
  double c = (r.trace() - 1.0) * 0.5;
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

double rotation_angle_rad(const Mat3& a, const Mat3& b) {
  return rotation_angle_rad(Mat3(a.transpose() * b));
}

double rotation_angle_deg(const RigidPose& a, const RigidPose& b) {
  return rotation_angle_rad(a.rotation, b.rotation) * 180.0 / M_PI;
}

CameraModel CameraModel::simple(double f, double cx, double cy, int w, int h,
                                const RigidPose& world_to_camera) {
  CameraModel cam;
  cam.intrinsics << f, 0, cx, 0, f, cy, 0, 0, 1;
  cam.extrinsics = world_to_camera;
  cam.width = w;
  cam.height = h;
  return cam;
}

std::optional<Eigen::Vector2d> project(const Vec3& point, const CameraModel& cam) {
  Vec3 pc = cam.extrinsics.apply(point);
  if (pc.z() <= 0.0) return std::nullopt;
  Vec3 hom = cam.intrinsics * pc;
  Eigen::Vector2d uv(hom.x() / hom.z(), hom.y() / hom.z());
  long u = std::llround(uv.x());
  long v = std::llround(uv.y());
  if (u < 0 || u >= cam.width || v < 0 || v >= cam.height) return std::nullopt;
  return uv;
}

double camera_depth(const Vec3& point, const CameraModel& cam) {
  return cam.extrinsics.apply(point).z();
}

Vec3 unproject(const Eigen::Vector2d& pixel, double depth, const CameraModel& cam) {
  Vec3 ray = cam.intrinsics.inverse() * Vec3(pixel.x(), pixel.y(), 1.0);
  return cam.extrinsics.inverse().apply(ray * depth);
}

Vec3 PointCloud::centroid() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : positions) sum += p;
  return positions.empty() ? sum : Vec3(sum / static_cast<double>(positions.size()));
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidPose& pose) {
  PointCloud out;
  out.ids = cloud.ids;
  out.positions.reserve(cloud.positions.size());
  for (const auto& p : cloud.positions) out.positions.push_back(pose.apply(p));
  return out;
}

RigidPose kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size() || src.size() < 3) {
    throw DegenerateCorrespondences("kabsch requires >= 3 matched pairs");
  }
  const double n = static_cast<double>(src.size());
  Vec3 sc = Vec3::Zero(), dc = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    sc += src[i];
    dc += dst[i];
  }
  sc /= n;
  dc /= n;
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    h += (src[i] - sc) * (dst[i] - dc).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  Vec3 t = dc - r * sc;
  return {r, t};
}

}  // namespace streetfuse
