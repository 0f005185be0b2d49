#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "panoslam/image.hpp"

namespace panoslam {

struct Intrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw std::invalid_argument("intrinsics: principal point outside image");
    if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: empty image");
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

/// World-to-camera rigid transform: x_cam = R(q) * x_world + t.
/// Quaternion stored (w, x, y, z), kept unit-norm.
class CameraPose {
 public:
  CameraPose() : quat_(1, 0, 0, 0), trans_(0, 0, 0) {}

  CameraPose(const Vec4& quat_wxyz, const Vec3& translation)
      : quat_(quat_wxyz), trans_(translation) {
    renormalize();
  }

  static CameraPose identity() { return CameraPose(); }

  const Vec4& quat() const { return quat_; }
  const Vec3& translation() const { return trans_; }

  void set(const Vec4& quat_wxyz, const Vec3& translation) {
    quat_ = quat_wxyz;
    trans_ = translation;
    renormalize();
  }

  Mat3 rotation() const {
    const double w = quat_[0], x = quat_[1], y = quat_[2], z = quat_[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
  }

  Vec3 transform(const Vec3& world) const { return rotation() * world + trans_; }

  Vec3 inverse_transform(const Vec3& cam) const {
    return rotation().transpose() * (cam - trans_);
  }

  /// Camera center in world coordinates.
  Vec3 center() const { return -(rotation().transpose() * trans_); }

  CameraPose inverse() const {
    const Vec4 qc(quat_[0], -quat_[1], -quat_[2], -quat_[3]);
    return CameraPose(qc, -(rotation().transpose() * trans_));
  }

  /// this ∘ other: applies `other` first.
  CameraPose compose(const CameraPose& other) const {
    return CameraPose(quat_mul(quat_, other.quat_),
                      rotation() * other.trans_ + trans_);
  }

  static Vec4 quat_mul(const Vec4& a, const Vec4& b) {
    return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
  }

  void renormalize() {
    const double n = quat_.norm();
    if (!(n > 1e-12)) throw std::invalid_argument("camera pose: degenerate quaternion");
    quat_ /= n;
  }

 private:
  Vec4 quat_;
  Vec3 trans_;
};

inline Vec2 project_point(const Vec3& cam, const Intrinsics& intr) {
  return Vec2(intr.fx * cam.x() / cam.z() + intr.cx,
              intr.fy * cam.y() / cam.z() + intr.cy);
}

/// Pixel (u, v) at camera-frame depth d (z-depth) back to camera coordinates.
inline Vec3 backproject_pixel(double u, double v, double d, const Intrinsics& intr) {
  return Vec3((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
}

inline double angular_distance(const CameraPose& a, const CameraPose& b) {
  const double dot = std::min(1.0, std::abs(a.quat().dot(b.quat())));
  return 2.0 * std::acos(dot);
}

}  // namespace panoslam
