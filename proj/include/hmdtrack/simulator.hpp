#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "hmdtrack/calibration.hpp"
#include "hmdtrack/camera.hpp"
#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"
#include "hmdtrack/labelgen.hpp"

namespace hmdtrack {

// Per-measurement noise. Rotation: random axis, angle ~ N(0, sigma_rot).
// Translation: isotropic, RMS norm sigma_trans.
struct NoiseConfig {
  double rot_headset{deg2rad(0.349)};
  double trans_headset{0.006693};
  double rot_ctrl{deg2rad(0.032)};
  double trans_ctrl{0.000658};

  static NoiseConfig none() { return {0.0, 0.0, 0.0, 0.0}; }
};

struct DropoutConfig {
  double rate_per_second{0.0};
  double mean_gap_frames{25.0};  // mocap frames
};

// Fixed transforms of the simulated capture setup.
struct SceneCalibration {
  Pose T_H_Cam{Quaternion::from_axis_angle({1.0, 0.0, 0.0}, 0.3), {0.02, -0.05, 0.08}};
  Pose T_CB_CT{Quaternion::from_axis_angle({0.0, 1.0, 0.0}, -0.4), {0.0, 0.03, 0.12}};
  Pose T_V_W{Quaternion::from_axis_angle({0.0, 0.0, 1.0}, 0.7), {1.5, -0.4, 0.0}};
};

struct SimConfig {
  std::uint64_t seed{0};
  double duration{20.0};      // seconds
  double mocap_rate{500.0};   // Hz
  double camera_rate{30.0};   // Hz
  NoiseConfig noise{};
  DropoutConfig dropout{};
  double clock_offset{0.0};   // mocap clock minus camera clock, seconds
  double reinit_seconds{0.6};
  double reinit_noise_scale{5.0};

  void validate() const {
    if (!(duration > 0.0)) throw Error("duration must be positive");
    if (!(mocap_rate > 0.0) || !(camera_rate > 0.0)) throw Error("rates must be positive");
    if (camera_rate > mocap_rate) throw Error("camera rate exceeds mocap rate");
    if (noise.rot_headset < 0.0 || noise.trans_headset < 0.0 || noise.rot_ctrl < 0.0 ||
        noise.trans_ctrl < 0.0) {
      throw Error("noise sigma must be non-negative");
    }
    if (dropout.rate_per_second < 0.0 || !(dropout.mean_gap_frames >= 1.0)) {
      throw Error("invalid dropout config");
    }
  }
};

// Stand-in for the trained network: groundtruth plus configured noise.
struct OraclePredictor {
  double pixel_noise_sigma{0.0};        // per image axis, pixels
  double depth_noise_sigma{0.0};        // meters
  double orientation_noise_sigma{0.0};  // radians, random axis
  double box_noise_sigma{0.0};          // box center jitter, pixels per axis
  bool noisy_score{false};              // otherwise constant 1
  int image_width{640};                 // converts box jitter to normalized units
  int image_height{480};
  std::uint64_t seed{0};
};

namespace detail {

// Uniform cubic B-spline over control points spaced `knot` seconds apart.
// Stays inside the convex hull of its control points and is C2.
template <typename V>
class UniformBSpline {
 public:
  UniformBSpline() = default;
  UniformBSpline(std::vector<V> pts, double knot) : pts_(std::move(pts)), knot_(knot) {}

  V operator()(double t) const {
    const double x = std::max(0.0, t / knot_);
    auto seg = static_cast<std::size_t>(x);
    if (seg + 3 >= pts_.size()) seg = pts_.size() - 4;
    const double s = std::min(1.0, x - static_cast<double>(seg));
    const double s2 = s * s, s3 = s2 * s;
    const double b0 = (1 - s) * (1 - s) * (1 - s) / 6.0;
    const double b1 = (3 * s3 - 6 * s2 + 4) / 6.0;
    const double b2 = (-3 * s3 + 3 * s2 + 3 * s + 1) / 6.0;
    const double b3 = s3 / 6.0;
    return b0 * pts_[seg] + b1 * pts_[seg + 1] + b2 * pts_[seg + 2] + b3 * pts_[seg + 3];
  }

 private:
  std::vector<V> pts_;
  double knot_{1.0};
};

inline Vec3 uniform_in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 v{u(rng), u(rng), u(rng)};
    if (v.squaredNorm() <= 1.0) return radius * v;
  }
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v{n(rng), n(rng), n(rng)};
    if (v.norm() > 1e-9) return v.normalized();
  }
}

// Pose perturbation with RMS rotation angle `rot` and RMS translation norm
// `trans`.
inline Pose perturb(const Pose& p, double rot, double trans, std::mt19937_64& rng) {
  if (rot == 0.0 && trans == 0.0) return p;
  std::normal_distribution<double> n(0.0, 1.0);
  const Quaternion dq = Quaternion::from_axis_angle(random_unit(rng), rot * n(rng));
  const double s = trans / std::sqrt(3.0);
  const Vec3 dt{s * n(rng), s * n(rng), s * n(rng)};
  return {p.rotation * dq, p.translation + dt};
}

}  // namespace detail

// Continuous-time scene: headset constellation in the mocap room and the tip
// relative to the left camera.
class SceneMotion {
 public:
  SceneMotion(const SimConfig& cfg, const SceneCalibration& calib) : calib_(calib) {
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 17);
    const double span = cfg.duration + 2.0;
    auto count = [&](double knot) { return static_cast<std::size_t>(std::ceil(span / knot)) + 4; };

    constexpr double kHeadKnot = 1.0, kTipKnot = 0.8;
    std::vector<Vec3> hp, hr, tp, tr;
    for (std::size_t i = 0; i < count(kHeadKnot); ++i) {
      hp.push_back(Vec3{0.0, 0.0, 1.6} + detail::uniform_in_ball(rng, 0.12));
      hr.push_back(detail::uniform_in_ball(rng, 0.4));
    }
    // Tip region: in front of the camera, biased right (+x) and down (+y).
    std::uniform_real_distribution<double> ux(-0.15, 0.35), uy(-0.10, 0.30), uz(0.25, 0.70);
    for (std::size_t i = 0; i < count(kTipKnot); ++i) {
      tp.push_back({ux(rng), uy(rng), uz(rng)});
      tr.push_back(detail::uniform_in_ball(rng, 0.6));
    }
    head_pos_ = {hp, kHeadKnot};
    head_rot_ = {hr, kHeadKnot};
    tip_pos_ = {tp, kTipKnot};
    tip_rot_ = {tr, kTipKnot};
  }

  Pose T_V_H(double t) const {
    return {kHeadBase * Quaternion::from_rotation_vector(head_rot_(t)), head_pos_(t)};
  }
  Pose T_V_Cam(double t) const { return T_V_H(t) * calib_.T_H_Cam; }
  Pose T_Cam_CT(double t) const {
    return {kTipBase * Quaternion::from_rotation_vector(tip_rot_(t)), tip_pos_(t)};
  }
  Pose T_V_CT(double t) const { return T_V_Cam(t) * T_Cam_CT(t); }
  Pose T_V_CB(double t) const { return T_V_CT(t) * calib_.T_CB_CT.inverse(); }
  Pose T_W_Cam(double t) const { return calib_.T_V_W.inverse() * T_V_Cam(t); }

  const SceneCalibration& calibration() const { return calib_; }

 private:
  // Nominal orientations the spline rotations perturb.
  inline static const Quaternion kHeadBase = Quaternion::from_axis_angle({0.0, 0.0, 1.0}, 0.2);
  inline static const Quaternion kTipBase = Quaternion::from_axis_angle({1.0, 0.0, 0.0}, -0.5);

  SceneCalibration calib_;
  detail::UniformBSpline<Vec3> head_pos_, head_rot_, tip_pos_, tip_rot_;
};

struct Trajectories {
  TimedTrajectory controller;  // T_V_CT, tip in the mocap room
  TimedTrajectory headset;     // T_V_H
};

inline double mocap_time(std::size_t j, double rate) { return static_cast<double>(j) / rate; }

inline Trajectories gen_trajectories(const SimConfig& cfg, const SceneCalibration& calib = {}) {
  cfg.validate();
  const SceneMotion scene(cfg, calib);
  Trajectories out;
  out.controller.rate_hz = out.headset.rate_hz = cfg.mocap_rate;
  const auto n = static_cast<std::size_t>(std::floor(cfg.duration * cfg.mocap_rate)) + 1;
  for (std::size_t j = 0; j < n; ++j) {
    const double t = mocap_time(j, cfg.mocap_rate);
    out.controller.samples.push_back({t, scene.T_V_CT(t), true});
    out.headset.samples.push_back({t, scene.T_V_H(t), true});
  }
  return out;
}

enum class MocapBody { headset, controller };

// Noisy mocap observation with dropout gaps (samples marked invalid) and a
// reinitialization transient of inflated noise after each gap.
inline TimedTrajectory observe_mocap(const TimedTrajectory& traj, const SimConfig& cfg,
                                     MocapBody body) {
  const bool head = body == MocapBody::headset;
  const double rot = head ? cfg.noise.rot_headset : cfg.noise.rot_ctrl;
  const double trans = head ? cfg.noise.trans_headset : cfg.noise.trans_ctrl;
  std::mt19937_64 rng(cfg.seed * 0xD1B54A32D192ED03ULL + (head ? 101 : 202));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double rate = traj.rate_hz > 0.0 ? traj.rate_hz : cfg.mocap_rate;
  const double p_start = cfg.dropout.rate_per_second / rate;
  const auto transient = static_cast<std::size_t>(std::lround(cfg.reinit_seconds * rate));

  TimedTrajectory out;
  out.rate_hz = traj.rate_hz;
  out.samples.reserve(traj.size());
  std::size_t gap_left = 0, transient_left = 0;
  for (const auto& s : traj.samples) {
    if (gap_left == 0 && p_start > 0.0 && u01(rng) < p_start) {
      std::geometric_distribution<std::size_t> g(1.0 / cfg.dropout.mean_gap_frames);
      gap_left = 1 + g(rng);
    }
    TimedPose o = s;
    if (gap_left > 0) {
      --gap_left;
      o.valid = false;
      if (gap_left == 0) transient_left = transient;
    } else if (transient_left > 0) {
      --transient_left;
      o.pose = detail::perturb(s.pose, cfg.reinit_noise_scale * rot,
                               cfg.reinit_noise_scale * trans, rng);
    } else {
      o.pose = detail::perturb(s.pose, rot, trans, rng);
    }
    out.samples.push_back(o);
  }
  return out;
}

// Everything one simulated capture session produces.
struct SimSession {
  Trajectories truth;
  TimedTrajectory mocap_headset;         // observed T_V_H, mocap clock
  TimedTrajectory mocap_controller_back;  // observed T_V_CB, mocap clock
  TimedTrajectory camera;                // T_W_Cam at camera frames, camera clock
  std::vector<TipSample> tip_samples;    // tip-marker session for the tip offset
  std::vector<FrameRecord> records;      // groundtruth T_Cam_CT per camera frame
};

inline SimSession simulate_session(const SimConfig& cfg, const StereoRig& rig,
                                   const SceneCalibration& calib = {}) {
  cfg.validate();
  rig.validate();
  const SceneMotion scene(cfg, calib);
  SimSession s;
  s.truth = gen_trajectories(cfg, calib);

  TimedTrajectory cb;
  cb.rate_hz = cfg.mocap_rate;
  for (const auto& p : s.truth.controller.samples) {
    cb.samples.push_back({p.t, p.pose * calib.T_CB_CT.inverse(), true});
  }
  s.mocap_headset = observe_mocap(s.truth.headset, cfg, MocapBody::headset);
  s.mocap_controller_back = observe_mocap(cb, cfg, MocapBody::controller);
  for (auto* tr : {&s.mocap_headset, &s.mocap_controller_back}) {
    for (auto& p : tr->samples) p.t += cfg.clock_offset;
  }

  // Camera frames land on the mocap sample grid of the true clock.
  s.camera.rate_hz = cfg.camera_rate;
  const std::size_t nm = s.truth.headset.size();
  for (std::size_t k = 0;; ++k) {
    const auto j = static_cast<std::size_t>(
        std::llround(static_cast<double>(k) * cfg.mocap_rate / cfg.camera_rate));
    if (j >= nm) break;
    const double t = mocap_time(j, cfg.mocap_rate);
    s.camera.samples.push_back({t, scene.T_W_Cam(t), true});
    FrameRecord r;
    r.timestamp = t;
    r.frame_id = static_cast<std::int64_t>(k);
    r.T_Cam_CT = scene.T_Cam_CT(t);
    r.T_World_Cam = scene.T_W_Cam(t);
    r.tracking_valid = s.mocap_headset.samples[j].valid && s.mocap_controller_back.samples[j].valid;
    s.records.push_back(r);
  }

  // Tip-marker session: both constellations observed with controller noise.
  std::mt19937_64 rng(cfg.seed * 0x94D049BB133111EBULL + 303);
  constexpr std::size_t kTipSamples = 100;
  for (std::size_t i = 0; i < kTipSamples; ++i) {
    const double t = cfg.duration * (static_cast<double>(i) + 0.5) / kTipSamples;
    const Pose ct = scene.T_V_CT(t);
    s.tip_samples.push_back({detail::perturb(ct * calib.T_CB_CT.inverse(), cfg.noise.rot_ctrl,
                                             cfg.noise.trans_ctrl, rng),
                             detail::perturb(ct, cfg.noise.rot_ctrl, cfg.noise.trans_ctrl, rng)});
  }
  return s;
}

inline std::vector<FrameRecord> render_dataset(const SimConfig& cfg, const StereoRig& rig,
                                               const SceneCalibration& calib = {}) {
  return simulate_session(cfg, rig, calib).records;
}

// Groundtruth rows plus oracle noise. Box jitter moves the box center; the
// score is 1 or uniform in [0.5, 1].
inline std::vector<LabelRow> oracle_predict(const std::vector<LabelRow>& samples,
                                            const OraclePredictor& oracle) {
  std::mt19937_64 rng(oracle.seed * 0xBF58476D1CE4E5B9ULL + 404);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> us(0.5, 1.0);
  std::vector<LabelRow> out;
  out.reserve(samples.size());
  for (const auto& gt : samples) {
    LabelRow p = gt;
    p.kp_l.u += oracle.pixel_noise_sigma * n(rng);
    p.kp_l.v += oracle.pixel_noise_sigma * n(rng);
    p.kp_l.z += oracle.depth_noise_sigma * n(rng);
    p.kp_r.u += oracle.pixel_noise_sigma * n(rng);
    p.kp_r.v += oracle.pixel_noise_sigma * n(rng);
    p.kp_r.z += oracle.depth_noise_sigma * n(rng);
    if (oracle.orientation_noise_sigma > 0.0) {
      p.q = (gt.q * Quaternion::from_axis_angle(detail::random_unit(rng),
                                                oracle.orientation_noise_sigma * n(rng)))
                .canonical();
    }
    if (oracle.box_noise_sigma > 0.0) {
      const double sx = oracle.box_noise_sigma / oracle.image_width;
      const double sy = oracle.box_noise_sigma / oracle.image_height;
      p.box_l.cx += sx * n(rng);
      p.box_l.cy += sy * n(rng);
      p.box_r.cx += sx * n(rng);
      p.box_r.cy += sy * n(rng);
    }
    p.score = oracle.noisy_score ? us(rng) : 1.0;
    out.push_back(p);
  }
  return out;
}

}  // namespace hmdtrack
