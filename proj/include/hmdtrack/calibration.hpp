#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"

namespace hmdtrack {

// One relative motion observed by both rigidly attached sensors over the same
// interval: A = headset-constellation motion, B = camera motion, A X = X B.
struct MotionPair {
  Pose A;
  Pose B;
};

struct HandEyeResult {
  Pose X;                        // camera in the headset-constellation frame
  double rotation_rmse{0.0};     // radians
  double translation_rmse{0.0};  // meters
  std::size_t n_pairs{0};
};

namespace detail {

// q * p == left_matrix(q) * p, with quaternions as (w, x, y, z).
inline Eigen::Matrix4d left_matrix(const Quaternion& q) {
  Eigen::Matrix4d L;
  L << q.w, -q.x, -q.y, -q.z,
       q.x, q.w, -q.z, q.y,
       q.y, q.z, q.w, -q.x,
       q.z, -q.y, q.x, q.w;
  return L;
}

// p * q == right_matrix(q) * p.
inline Eigen::Matrix4d right_matrix(const Quaternion& q) {
  Eigen::Matrix4d R;
  R << q.w, -q.x, -q.y, -q.z,
       q.x, q.w, q.z, -q.y,
       q.y, -q.z, q.w, q.x,
       q.z, q.y, -q.x, q.w;
  return R;
}

inline void check_motion_excitation(const std::vector<MotionPair>& pairs) {
  std::vector<Vec3> axes;
  for (const auto& p : pairs) {
    const Vec3 rv = p.A.rotation.to_rotation_vector();
    if (rv.norm() > 1e-9) axes.push_back(rv.normalized());
  }
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (std::size_t j = i + 1; j < axes.size(); ++j) {
      if (axes[i].cross(axes[j]).norm() >= 1e-6) return;
    }
  }
  throw Error("degenerate motion set");
}

}  // namespace detail

// Residuals of A_i X vs X B_i, reported as RMS rotation angle and RMS
// translation distance.
inline std::pair<double, double> hand_eye_residuals(const std::vector<MotionPair>& pairs,
                                                    const Pose& X) {
  double rot = 0.0;
  double trans = 0.0;
  for (const auto& p : pairs) {
    const Pose lhs = p.A * X;
    const Pose rhs = X * p.B;
    const double a = rotation_angle_between(lhs.rotation, rhs.rotation);
    rot += a * a;
    trans += (lhs.translation - rhs.translation).squaredNorm();
  }
  const double n = static_cast<double>(pairs.size());
  return {std::sqrt(rot / n), std::sqrt(trans / n)};
}

// Separable AX = XB solver: rotation from the stacked quaternion constraints
// (q_A q_X - q_X q_B = 0) by SVD, then translation from
// (R_A - I) t_X = R_X t_B - t_A by linear least squares.
inline HandEyeResult hand_eye_solve(const std::vector<MotionPair>& pairs) {
  if (pairs.size() < 3) throw Error("insufficient motions");
  detail::check_motion_excitation(pairs);

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd M(4 * n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Quaternion qa = pairs[i].A.rotation;
    Quaternion qb = pairs[i].B.rotation;
    // Similar rotations share the same angle, so w agrees up to the double cover.
    if (qa.w * qb.w < 0.0) qb = qb.negated();
    M.middleRows<4>(4 * i) = detail::left_matrix(qa) - detail::right_matrix(qb);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const Eigen::Vector4d v = svd.matrixV().col(3);
  const Quaternion qx = Quaternion{v(0), v(1), v(2), v(3)}.normalized().canonical();

  Eigen::MatrixXd C(3 * n, 3);
  Eigen::VectorXd d(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    C.middleRows<3>(3 * i) = pairs[i].A.rotation.to_matrix() - Mat3::Identity();
    d.segment<3>(3 * i) = qx.rotate(pairs[i].B.translation) - pairs[i].A.translation;
  }
  const Vec3 tx = C.colPivHouseholderQr().solve(d);

  HandEyeResult out;
  out.X = {qx, tx};
  out.n_pairs = pairs.size();
  std::tie(out.rotation_rmse, out.translation_rmse) = hand_eye_residuals(pairs, out.X);
  return out;
}

// Relative motions between samples `stride` frames apart. The camera stream
// drives the sampling; the headset stream is interpolated at camera time plus
// `offset` (mocap clock = camera clock + offset).
inline std::vector<MotionPair> extract_motion_pairs(const TimedTrajectory& headset,
                                                    const TimedTrajectory& camera,
                                                    double offset, std::size_t stride = 10) {
  if (stride == 0) throw Error("stride must be positive");
  std::vector<MotionPair> pairs;
  const auto& cs = camera.samples;
  auto in_range = [&](double t) { return t >= headset.start() && t <= headset.end(); };
  for (std::size_t i = 0; i + stride < cs.size(); i += stride) {
    const std::size_t j = i + stride;
    if (!cs[i].valid || !cs[j].valid) continue;
    const double ti = cs[i].t + offset;
    const double tj = cs[j].t + offset;
    if (!in_range(ti) || !in_range(tj)) continue;
    const Pose Hi = interpolate(headset, ti);
    const Pose Hj = interpolate(headset, tj);
    pairs.push_back({Hi.inverse() * Hj, cs[i].pose.inverse() * cs[j].pose});
  }
  return pairs;
}

// Rotation average: principal eigenvector of sum(q q^T), sign matched to the
// first input.
inline Quaternion average_quaternions(const std::vector<Quaternion>& qs) {
  if (qs.empty()) throw Error("no samples");
  if (qs.size() == 1) return qs.front();
  Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
  for (const auto& q : qs) acc += q.wxyz() * q.wxyz().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(acc);
  const Eigen::Vector4d v = es.eigenvectors().col(3);
  Quaternion m = Quaternion{v(0), v(1), v(2), v(3)}.normalized();
  if (m.dot(qs.front()) < 0.0) m = m.negated();
  return m;
}

struct TipSample {
  Pose T_V_CB;
  Pose T_V_CT;
};

inline Pose tip_calibrate(const std::vector<TipSample>& samples) {
  if (samples.empty()) throw Error("no samples");
  std::vector<Quaternion> qs;
  qs.reserve(samples.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& s : samples) {
    const Pose off = tip_offset(s.T_V_CB, s.T_V_CT);
    qs.push_back(off.rotation);
    mean += off.translation;
  }
  mean /= static_cast<double>(samples.size());
  return {average_quaternions(qs), mean};
}

struct TimeAlignment {
  double offset{0.0};            // seconds; mocap(t + offset) matches camera(t)
  double correlation_peak{0.0};  // normalized cross-correlation at the peak
};

namespace detail {

// Angular speed is differenced over this baseline so per-sample mocap noise
// does not swamp the motion signal.
inline constexpr double kSpeedBaseline = 0.3;  // seconds

inline double median_period(const TimedTrajectory& traj) {
  if (traj.size() < 2) throw Error("trajectory too short");
  std::vector<double> dts;
  dts.reserve(traj.size() - 1);
  for (std::size_t i = 1; i < traj.size(); ++i) dts.push_back(traj.samples[i].t - traj.samples[i - 1].t);
  std::nth_element(dts.begin(), dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2), dts.end());
  return dts[dts.size() / 2];
}

// Orientation on a uniform grid. Streams denser than the grid are averaged
// over each cell, sparser ones are interpolated. Times outside the stream
// clamp to its ends.
inline std::vector<Quaternion> orientations_on_grid(const TimedTrajectory& traj, double t0, double dt,
                                                    std::size_t n) {
  const auto& s = traj.samples;
  const bool dense = median_period(traj) < dt;
  std::vector<Quaternion> out(n);
  std::vector<Quaternion> cell;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) * dt;
    if (dense) {
      cell.clear();
      auto it = std::lower_bound(s.begin(), s.end(), t - 0.5 * dt,
                                 [](const TimedPose& p, double v) { return p.t < v; });
      for (; it != s.end() && it->t < t + 0.5 * dt; ++it) cell.push_back(it->pose.rotation);
      if (!cell.empty()) {
        out[i] = average_quaternions(cell);
        continue;
      }
    }
    out[i] = interpolate(traj, std::clamp(t, traj.start(), traj.end())).rotation;
  }
  return out;
}

struct SpeedGrid {
  std::vector<double> speed;
  std::vector<char> ok;  // inside the stream and clear of tracking gaps
};

// |omega| at t0 + i*dt, i < n, by central differences over kSpeedBaseline.
// Invalid samples are dropped; cells whose difference window touches a gap
// longer than 1.5 sample periods are marked not ok.
inline SpeedGrid speed_on_grid(const TimedTrajectory& traj, double t0, double dt, std::size_t n) {
  const double period = median_period(traj);
  TimedTrajectory valid;
  for (const auto& s : traj.samples) {
    if (s.valid) valid.samples.push_back(s);
  }
  if (valid.size() < 2) throw Error("trajectory too short");
  std::vector<std::pair<double, double>> gaps;
  for (std::size_t i = 1; i < valid.size(); ++i) {
    const double a = valid.samples[i - 1].t, b = valid.samples[i].t;
    if (b - a > 1.5 * period) gaps.emplace_back(a, b);
  }

  const auto half = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.5 * kSpeedBaseline / dt)));
  const auto q = orientations_on_grid(valid, t0 - static_cast<double>(half) * dt, dt, n + 2 * half);
  const double span = 2.0 * static_cast<double>(half) * dt;
  SpeedGrid g{std::vector<double>(n), std::vector<char>(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    g.speed[i] = rotation_angle_between(q[i], q[i + 2 * half]) / span;
    const double t = t0 + static_cast<double>(i) * dt;
    const double lo = t - 0.5 * span - 0.5 * dt, hi = t + 0.5 * span + 0.5 * dt;
    g.ok[i] = t >= valid.start() && t <= valid.end();
    for (const auto& [a, b] : gaps) {
      if (a < hi && b > lo) g.ok[i] = 0;
    }
  }
  return g;
}

inline double stddev(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

// Clock offset from the cross-correlation of angular-speed profiles on a
// uniform grid, with quadratic refinement of the peak.
inline TimeAlignment time_align(const TimedTrajectory& mocap, const TimedTrajectory& camera,
                                double search_window, double resample_hz = 100.0) {
  if (!(search_window > 0.0) || !(resample_hz > 0.0)) throw Error("invalid alignment parameters");
  if (mocap.size() < 2 || camera.size() < 2) throw Error("trajectory too short");
  mocap.validate();
  camera.validate();
  const double dt = 1.0 / resample_hz;
  const auto max_lag = static_cast<long>(std::ceil(search_window * resample_hz));

  const double c0 = camera.start();
  const auto nc = static_cast<std::size_t>(std::floor((camera.end() - c0) * resample_hz)) + 1;
  const detail::SpeedGrid cam = detail::speed_on_grid(camera, c0, dt, nc);

  // Mocap on the same grid, extended by max_lag cells on each side.
  const double m0 = c0 - static_cast<double>(max_lag) * dt;
  const std::size_t nm = nc + 2 * static_cast<std::size_t>(max_lag);
  const detail::SpeedGrid moc = detail::speed_on_grid(mocap, m0, dt, nm);

  constexpr double kFlat = 1e-9;
  const auto nfull = static_cast<std::size_t>(std::floor((mocap.end() - mocap.start()) * resample_hz)) + 1;
  if (detail::stddev(cam.speed) < kFlat ||
      detail::stddev(detail::speed_on_grid(mocap, mocap.start(), dt, nfull).speed) < kFlat) {
    throw Error("no motion to align");
  }

  std::vector<double> corr(2 * static_cast<std::size_t>(max_lag) + 1, -2.0);
  for (long k = -max_lag; k <= max_lag; ++k) {
    double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < nc; ++i) {
      const auto j = static_cast<std::size_t>(static_cast<long>(i) + k + max_lag);
      if (!cam.ok[i] || !moc.ok[j]) continue;
      const double a = cam.speed[i];
      const double b = moc.speed[j];
      sa += a;
      sb += b;
      saa += a * a;
      sbb += b * b;
      sab += a * b;
      ++n;
    }
    if (n < 3) continue;
    const double dn = static_cast<double>(n);
    const double cov = sab - sa * sb / dn;
    const double va = saa - sa * sa / dn;
    const double vb = sbb - sb * sb / dn;
    if (va <= 0.0 || vb <= 0.0) continue;
    corr[static_cast<std::size_t>(k + max_lag)] = cov / std::sqrt(va * vb);
  }

  const auto best = static_cast<std::size_t>(std::max_element(corr.begin(), corr.end()) - corr.begin());
  if (corr[best] < -1.0) throw Error("no motion to align");
  double shift = 0.0;
  if (best > 0 && best + 1 < corr.size() && corr[best - 1] >= -1.0 && corr[best + 1] >= -1.0) {
    const double ym = corr[best - 1], y0 = corr[best], yp = corr[best + 1];
    const double denom = ym - 2.0 * y0 + yp;
    if (denom < 0.0) shift = 0.5 * (ym - yp) / denom;
  }
  TimeAlignment out;
  out.offset = (static_cast<double>(static_cast<long>(best) - max_lag) + shift) * dt;
  out.correlation_peak = std::clamp(corr[best], -1.0, 1.0);
  return out;
}

}  // namespace hmdtrack
