#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "hmdtrack/error.hpp"

namespace hmdtrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = std::numbers::pi;

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Hamilton unit quaternion, scalar first.
struct Quaternion {
  double w{1.0};
  double x{0.0};
  double y{0.0};
  double z{0.0};

  static Quaternion identity() { return {}; }

  static Quaternion from_axis_angle(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (n == 0.0) return identity();
    const Vec3 a = axis / n;
    const double s = std::sin(0.5 * angle);
    return Quaternion{std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s}.normalized();
  }

  // Exponential map of a rotation vector (axis * angle).
  static Quaternion from_rotation_vector(const Vec3& rv) {
    const double angle = rv.norm();
    if (angle < 1e-12) {
      return Quaternion{1.0, 0.5 * rv.x(), 0.5 * rv.y(), 0.5 * rv.z()}.normalized();
    }
    return from_axis_angle(rv / angle, angle);
  }

  // Shepperd's method; picks the largest diagonal term for stability.
  static Quaternion from_matrix(const Mat3& R) {
    const double tr = R.trace();
    Quaternion q;
    if (tr > R(0, 0) && tr > R(1, 1) && tr > R(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 + tr);
      q = {0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s, (R(1, 0) - R(0, 1)) / s};
    } else if (R(0, 0) >= R(1, 1) && R(0, 0) >= R(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2));
      q = {(R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s, (R(0, 2) + R(2, 0)) / s};
    } else if (R(1, 1) >= R(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 - R(0, 0) + R(1, 1) - R(2, 2));
      q = {(R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s, (R(1, 2) + R(2, 1)) / s};
    } else {
      const double s = 2.0 * std::sqrt(1.0 - R(0, 0) - R(1, 1) + R(2, 2));
      q = {(R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s, (R(1, 2) + R(2, 1)) / s, 0.25 * s};
    }
    return q.normalized();
  }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quaternion normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  Quaternion inverse() const { return conjugate(); }
  Quaternion negated() const { return {-w, -x, -y, -z}; }

  // Representative with w >= 0 (resolves the q / -q double cover).
  Quaternion canonical() const { return w < 0.0 ? negated() : *this; }

  Vec3 vec() const { return {x, y, z}; }
  Eigen::Vector4d wxyz() const { return {w, x, y, z}; }

  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

  Mat3 to_matrix() const {
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
  }

  Vec3 rotate(const Vec3& v) const {
    const Vec3 u = vec();
    const Vec3 t = 2.0 * u.cross(v);
    return v + w * t + u.cross(t);
  }

  // Logarithm map onto the shortest rotation, angle in [0, pi].
  Vec3 to_rotation_vector() const {
    const Quaternion q = canonical();
    const double s = q.vec().norm();
    if (s < 1e-12) return 2.0 * q.vec();
    const double angle = 2.0 * std::atan2(s, q.w);
    return q.vec() * (angle / s);
  }

  double angle() const { return to_rotation_vector().norm(); }
};

// Hamilton product, normalized eagerly.
inline Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return Quaternion{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                    a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                    a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                    a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w}
      .normalized();
}

// Geodesic angle between two rotations, in [0, pi].
inline double rotation_angle_between(const Quaternion& a, const Quaternion& b) {
  // atan2 keeps precision for tiny angles where acos(|a.b|) does not.
  const Quaternion r = a.conjugate() * b;
  return 2.0 * std::atan2(r.vec().norm(), std::abs(r.w));
}

inline bool same_rotation(const Quaternion& a, const Quaternion& b, double tol = 1e-9) {
  return rotation_angle_between(a, b) <= tol;
}

// Shortest-path spherical interpolation; s = 0 gives a, s = 1 gives b.
inline Quaternion slerp(const Quaternion& a, Quaternion b, double s) {
  double d = a.dot(b);
  if (d < 0.0) {
    b = b.negated();
    d = -d;
  }
  if (d > 1.0 - 1e-12) {
    return Quaternion{a.w + s * (b.w - a.w), a.x + s * (b.x - a.x), a.y + s * (b.y - a.y),
                      a.z + s * (b.z - a.z)}
        .normalized();
  }
  const double theta = std::acos(std::min(1.0, d));
  const double sa = std::sin((1.0 - s) * theta) / std::sin(theta);
  const double sb = std::sin(s * theta) / std::sin(theta);
  return Quaternion{sa * a.w + sb * b.w, sa * a.x + sb * b.x, sa * a.y + sb * b.y,
                    sa * a.z + sb * b.z}
      .normalized();
}

// Rigid transform. Pose T_A_B maps coordinates in frame B into frame A (B's
// pose expressed in A).
struct Pose {
  Quaternion rotation{};
  Vec3 translation{Vec3::Zero()};

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Quaternion::identity(), t}; }
  static Pose from_rotation(const Quaternion& q) { return {q, Vec3::Zero()}; }

  static Pose from_matrix(const Mat4& T) {
    return {Quaternion::from_matrix(T.topLeftCorner<3, 3>()), T.topRightCorner<3, 1>()};
  }

  Mat4 to_matrix() const {
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = rotation.to_matrix();
    T.topRightCorner<3, 1>() = translation;
    return T;
  }

  Pose inverse() const {
    const Quaternion qi = rotation.conjugate();
    return {qi, -qi.rotate(translation)};
  }

  Vec3 transform(const Vec3& p) const { return rotation.rotate(p) + translation; }
};

// Matrix product T_a * T_b: applies b first, then a.
inline Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation};
}

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

// Tip pose in the left camera frame from the mocap chain:
// T_Cam_CT = (T_H_Cam)^-1 * (T_V_H)^-1 * T_V_CB * T_CB_CT.
// The first argument is already the inverted hand-eye transform.
inline Pose tip_pose_in_camera(const Pose& T_Cam_H, const Pose& T_V_H, const Pose& T_V_CB,
                               const Pose& T_CB_CT) {
  return T_Cam_H * T_V_H.inverse() * T_V_CB * T_CB_CT;
}

// Fixed offset from the controller-back constellation to the tip marker, from
// two simultaneous mocap observations: T_CB_CT = (T_V_CB)^-1 * T_V_CT.
inline Pose tip_offset(const Pose& T_V_CB, const Pose& T_V_CT) { return T_V_CB.inverse() * T_V_CT; }

// Intrinsic Z-Y-X angles: R = Rz(yaw) * Ry(pitch) * Rx(roll).
struct EulerAngles {
  double roll{0.0};
  double pitch{0.0};
  double yaw{0.0};

  Quaternion to_quaternion() const {
    const double cr = std::cos(0.5 * roll), sr = std::sin(0.5 * roll);
    const double cp = std::cos(0.5 * pitch), sp = std::sin(0.5 * pitch);
    const double cy = std::cos(0.5 * yaw), sy = std::sin(0.5 * yaw);
    return Quaternion{cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy,
                      cr * sp * cy + sr * cp * sy, cr * cp * sy - sr * sp * cy}
        .normalized();
  }

  static EulerAngles from_quaternion(const Quaternion& q) {
    EulerAngles e;
    e.roll = std::atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y));
    e.pitch = std::asin(std::clamp(2.0 * (q.w * q.y - q.z * q.x), -1.0, 1.0));
    e.yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
    return e;
  }

  // Angles indexed as (yaw, pitch, roll).
  double axis(int i) const { return i == 0 ? yaw : (i == 1 ? pitch : roll); }
};

struct TimedPose {
  double t{0.0};
  Pose pose{};
  bool valid{true};
};

struct TimedTrajectory {
  std::vector<TimedPose> samples;
  double rate_hz{0.0};

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double start() const { return samples.front().t; }
  double end() const { return samples.back().t; }

  void validate() const {
    for (std::size_t i = 1; i < samples.size(); ++i) {
      if (!(samples[i].t > samples[i - 1].t)) {
        throw Error("timestamps not strictly increasing");
      }
    }
  }
};

struct AngularVelocitySample {
  double t{0.0};
  Vec3 omega{Vec3::Zero()};
};

// Body-frame angular velocity by central differences; one-sided at the ends.
inline std::vector<AngularVelocitySample> angular_velocity(const TimedTrajectory& traj) {
  const auto& s = traj.samples;
  if (s.size() < 2) throw Error("trajectory too short");
  std::vector<AngularVelocitySample> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == s.size() ? i : i + 1;
    const Quaternion dq = s[lo].pose.rotation.conjugate() * s[hi].pose.rotation;
    out[i] = {s[i].t, dq.to_rotation_vector() / (s[hi].t - s[lo].t)};
  }
  return out;
}

// Linear translation / slerp rotation between the bracketing samples.
inline Pose interpolate(const TimedTrajectory& traj, double t) {
  const auto& s = traj.samples;
  if (s.empty() || t < s.front().t || t > s.back().t) throw Error("extrapolation refused");
  const auto it = std::lower_bound(s.begin(), s.end(), t,
                                   [](const TimedPose& p, double v) { return p.t < v; });
  if (it->t == t) return it->pose;
  const TimedPose& b = *it;
  const TimedPose& a = *(it - 1);
  const double f = (t - a.t) / (b.t - a.t);
  return {slerp(a.pose.rotation, b.pose.rotation, f),
          a.pose.translation + f * (b.pose.translation - a.pose.translation)};
}

}  // namespace hmdtrack
