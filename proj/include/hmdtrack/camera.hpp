#pragma once

#include <cmath>
#include <vector>

#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"

namespace hmdtrack {

// Equidistant fisheye camera: r = theta * (1 + k1 theta^2 + k2 theta^4 + ...),
// u = cx + fx r cos(phi), v = cy + fy r sin(phi). Distortion defaults to none.
struct FisheyeCamera {
  double fx{160.0};
  double fy{160.0};
  double cx{320.0};
  double cy{240.0};
  int width{640};
  int height{480};
  double max_theta{1.7};
  std::vector<double> distortion{};

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error("focal lengths must be positive");
    if (!(max_theta > 0.0) || max_theta > kPi) throw Error("max_theta must lie in (0, pi]");
    if (width <= 0 || height <= 0) throw Error("image size must be positive");
  }

  bool contains(const Vec2& uv) const {
    return uv.x() >= 0.0 && uv.x() <= width && uv.y() >= 0.0 && uv.y() <= height;
  }

  double distorted_radius(double theta) const {
    double scale = 1.0;
    double t2k = 1.0;
    const double t2 = theta * theta;
    for (double k : distortion) {
      t2k *= t2;
      scale += k * t2k;
    }
    return theta * scale;
  }

  // Inverts distorted_radius by Newton iteration (identity when undistorted).
  double undistorted_theta(double r) const {
    if (distortion.empty()) return r;
    double theta = r;
    for (int it = 0; it < 50; ++it) {
      const double f = distorted_radius(theta) - r;
      const double h = 1e-7;
      const double df = (distorted_radius(theta + h) - distorted_radius(theta - h)) / (2.0 * h);
      const double step = f / df;
      theta -= step;
      if (std::abs(step) < 1e-15) break;
    }
    return theta;
  }
};

inline bool in_field_of_view(const FisheyeCamera& cam, const Vec3& p) {
  const double n = p.norm();
  if (n < 1e-9) return false;
  return std::atan2(std::hypot(p.x(), p.y()), p.z()) <= cam.max_theta;
}

inline Vec2 project(const FisheyeCamera& cam, const Vec3& p) {
  if (p.norm() < 1e-9) throw Error("degenerate point");
  const double rho = std::hypot(p.x(), p.y());
  const double theta = std::atan2(rho, p.z());
  if (theta > cam.max_theta) throw Error("outside field of view");
  if (rho == 0.0) return {cam.cx, cam.cy};
  const double r = cam.distorted_radius(theta);
  return {cam.cx + cam.fx * r * p.x() / rho, cam.cy + cam.fy * r * p.y() / rho};
}

// Unit ray through pixel (u, v).
inline Vec3 unproject(const FisheyeCamera& cam, const Vec2& uv) {
  const double mx = (uv.x() - cam.cx) / cam.fx;
  const double my = (uv.y() - cam.cy) / cam.fy;
  const double r = std::hypot(mx, my);
  if (r == 0.0) return Vec3::UnitZ();
  const double theta = cam.undistorted_theta(r);
  if (theta > cam.max_theta) throw Error("outside field of view");
  const double s = std::sin(theta);
  return {s * mx / r, s * my / r, std::cos(theta)};
}

inline FisheyeCamera scale_intrinsics(const FisheyeCamera& cam, double factor) {
  if (!(factor > 0.0)) throw Error("scale factor must be positive");
  FisheyeCamera out = cam;
  out.fx *= factor;
  out.fy *= factor;
  out.cx *= factor;
  out.cy *= factor;
  out.width = static_cast<int>(std::lround(cam.width * factor));
  out.height = static_cast<int>(std::lround(cam.height * factor));
  return out;
}

struct StereoRig {
  FisheyeCamera left{};
  FisheyeCamera right{};
  Pose T_left_right{};  // right camera in the left-camera frame

  double baseline() const { return T_left_right.translation.norm(); }

  void validate() const {
    left.validate();
    right.validate();
    if (!(baseline() > 0.0)) throw Error("stereo baseline must be positive");
  }

  // Expresses a left-camera point in the right-camera frame.
  Vec3 to_right(const Vec3& p_left) const { return T_left_right.inverse().transform(p_left); }
};

// 640x480, f = 160 px, centered principal point, 64 mm horizontal baseline,
// parallel optical axes.
inline StereoRig default_rig() {
  StereoRig rig;
  rig.T_left_right = Pose::from_translation({0.064, 0.0, 0.0});
  return rig;
}

struct Triangulation {
  Vec3 point{Vec3::Zero()};  // left-camera frame, meters
  double gap{0.0};           // closest distance between the two rays
};

// Midpoint of the common perpendicular between the two viewing rays.
inline Triangulation triangulate(const StereoRig& rig, const Vec2& uv_left, const Vec2& uv_right) {
  const Vec3 d1 = unproject(rig.left, uv_left);
  const Vec3 d2 = rig.T_left_right.rotation.rotate(unproject(rig.right, uv_right));
  const Vec3 o2 = rig.T_left_right.translation;
  const double b = d1.dot(d2);
  const double denom = 1.0 - b * b;
  if (std::sqrt(std::max(0.0, denom)) < 1e-6) throw Error("ill-conditioned triangulation");
  const Vec3 w0 = -o2;
  const double d = d1.dot(w0);
  const double e = d2.dot(w0);
  const double s = (b * e - d) / denom;
  const double u = (e - b * d) / denom;
  const Vec3 p1 = s * d1;
  const Vec3 p2 = o2 + u * d2;
  return {0.5 * (p1 + p2), (p1 - p2).norm()};
}

}  // namespace hmdtrack
