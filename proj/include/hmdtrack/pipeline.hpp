#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "hmdtrack/calibration.hpp"
#include "hmdtrack/camera.hpp"
#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"
#include "hmdtrack/labelgen.hpp"
#include "hmdtrack/metrics.hpp"
#include "hmdtrack/ssdaf.hpp"

namespace hmdtrack {

// ---------------------------------------------------------------------------
// Calibration session
// ---------------------------------------------------------------------------

struct CalibrationOptions {
  double search_window{1.0};  // seconds
  double resample_hz{100.0};
  std::size_t stride{10};     // camera frames between motion-pair endpoints
  bool snap_to_mocap{true};   // associate camera frames with exact mocap samples
};

struct CalibrationReport {
  HandEyeResult hand_eye;
  TimeAlignment alignment;
  double association_offset{0.0};  // offset used to look up mocap poses
  std::optional<Pose> tip_offset;  // T_CB_CT
  std::size_t n_tip_samples{0};
};

inline TimedTrajectory valid_only(const TimedTrajectory& traj) {
  TimedTrajectory out;
  out.rate_hz = traj.rate_hz;
  for (const auto& s : traj.samples) {
    if (s.valid) out.samples.push_back(s);
  }
  return out;
}

inline double sample_period(const TimedTrajectory& traj) {
  if (traj.rate_hz > 0.0) return 1.0 / traj.rate_hz;
  if (traj.size() < 2) throw Error("trajectory too short");
  std::vector<double> dts;
  for (std::size_t i = 1; i < traj.size(); ++i) dts.push_back(traj.samples[i].t - traj.samples[i - 1].t);
  std::nth_element(dts.begin(), dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2), dts.end());
  return dts[dts.size() / 2];
}

// Rounds `offset` to the nearest value that maps the camera sample grid onto
// the mocap sample grid.
inline double snap_offset(double offset, const TimedTrajectory& mocap, const TimedTrajectory& camera) {
  const double period = sample_period(mocap);
  const double phase = mocap.start() - camera.start();
  return phase + std::round((offset - phase) / period) * period;
}

inline CalibrationReport calibrate_session(const TimedTrajectory& mocap_headset,
                                           const TimedTrajectory& camera,
                                           const std::vector<TipSample>& tip_samples,
                                           const CalibrationOptions& opt = {}) {
  const TimedTrajectory head = valid_only(mocap_headset);
  const TimedTrajectory cam = valid_only(camera);
  CalibrationReport rep;
  rep.alignment = time_align(head, cam, opt.search_window, opt.resample_hz);
  rep.association_offset =
      opt.snap_to_mocap ? snap_offset(rep.alignment.offset, head, cam) : rep.alignment.offset;
  rep.hand_eye = hand_eye_solve(extract_motion_pairs(head, cam, rep.association_offset, opt.stride));
  if (!tip_samples.empty()) {
    rep.tip_offset = tip_calibrate(tip_samples);
    rep.n_tip_samples = tip_samples.size();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Synchronization and labels
// ---------------------------------------------------------------------------

// True when the samples used to interpolate at t are all tracked.
inline bool tracked_at(const TimedTrajectory& traj, double t) {
  const auto& s = traj.samples;
  if (s.empty() || t < s.front().t || t > s.back().t) return false;
  const auto it = std::lower_bound(s.begin(), s.end(), t,
                                   [](const TimedPose& p, double v) { return p.t < v; });
  if (it->t == t) return it->valid;
  return it->valid && (it - 1)->valid;
}

// One FrameRecord per camera frame with T_Cam_CT from the mocap chain at the
// associated mocap time. Frames without tracking are kept, marked invalid.
inline std::vector<FrameRecord> synchronize_records(const TimedTrajectory& mocap_headset,
                                                    const TimedTrajectory& mocap_controller_back,
                                                    const TimedTrajectory& camera,
                                                    const Pose& T_H_Cam, const Pose& T_CB_CT,
                                                    double association_offset) {
  std::vector<FrameRecord> out;
  out.reserve(camera.size());
  const Pose T_Cam_H = T_H_Cam.inverse();
  for (std::size_t k = 0; k < camera.size(); ++k) {
    const TimedPose& c = camera.samples[k];
    FrameRecord r;
    r.timestamp = c.t;
    r.frame_id = static_cast<std::int64_t>(k);
    r.T_World_Cam = c.pose;
    const double tm = c.t + association_offset;
    r.tracking_valid = tracked_at(mocap_headset, tm) && tracked_at(mocap_controller_back, tm);
    if (r.tracking_valid) {
      r.T_Cam_CT = tip_pose_in_camera(T_Cam_H, interpolate(mocap_headset, tm),
                                      interpolate(mocap_controller_back, tm), T_CB_CT);
    }
    out.push_back(r);
  }
  return out;
}

struct LabelResult {
  std::vector<LabeledSample> samples;
  CleanReport report;
  std::size_t dropped_invisible{0};
};

// Cleans the records, then labels the survivors; frames whose hand or tip is
// not visible in both images are dropped and counted separately.
inline LabelResult label_records(const std::vector<FrameRecord>& records, const StereoRig& rig) {
  LabelResult res;
  auto [kept, report] = clean_dataset(records);
  res.report = report;
  for (const auto& r : kept) {
    try {
      res.samples.push_back(make_labeled_sample(r, rig));
    } catch (const Error&) {
      ++res.dropped_invisible;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Head encoding / decoding
// ---------------------------------------------------------------------------

inline GroundTruth ground_truth(const LabeledSample& s, const StereoRig& rig, const FieldSchema& schema) {
  return {s.box_left, make_field_source(s, rig, schema)};
}

struct RoundtripStats {
  double max_abs_error{0.0};       // regression fields, decoded vs source
  double max_quant_error{0.0};     // bin schemes, per binned axis, radians
  double half_bin_width{0.0};
  std::size_t anchors_checked{0};
};

namespace detail {

inline void track_max(double& m, double v) { m = std::max(m, std::abs(v)); }

inline void compare_keypoint(double& m, const FieldKeypoint& a, const FieldKeypoint& b, bool with_z) {
  track_max(m, a.u - b.u);
  track_max(m, a.v - b.v);
  if (with_z) track_max(m, a.z - b.z);
}

inline void compare_quat(double& m, const Quaternion& a, const Quaternion& b) {
  const Quaternion ca = a.canonical(), cb = b.canonical();
  track_max(m, ca.w - cb.w);
  track_max(m, ca.x - cb.x);
  track_max(m, ca.y - cb.y);
  track_max(m, ca.z - cb.z);
}

inline void compare_euler(double& m, const EulerAngles& decoded, const Quaternion& q) {
  const EulerAngles e = EulerAngles::from_quaternion(q);
  track_max(m, decoded.roll - e.roll);
  track_max(m, decoded.pitch - e.pitch);
  track_max(m, decoded.yaw - e.yaw);
}

}  // namespace detail

// Encodes every matched anchor, decodes it again and compares against the
// source quantities.
inline RoundtripStats roundtrip_fields(const FieldSchema& schema, const std::vector<AnchorBox>& anchors,
                                       const GroundTruth& gt) {
  RoundtripStats st;
  if (schema.has_bins()) st.half_bin_width = 0.5 * schema.bin_scheme().width();
  const EncodedTarget t = encode_target(schema, anchors, {gt});
  const FieldSource& src = gt.source;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!t.rows[i].matched) continue;
    ++st.anchors_checked;
    const DecodedFields d = decode_fields(schema, anchors[i], t.rows[i].fields);
    double& m = st.max_abs_error;
    switch (schema.variant) {
      case Variant::AF2D:
        detail::compare_keypoint(m, d.left.at(0), src.left.at(0), false);
        break;
      case Variant::AF3D:
      case Variant::AF3DBinned:
      case Variant::AxisBinned:
        detail::compare_keypoint(m, d.left.at(0), src.left.at(0), true);
        break;
      case Variant::AFStereo3D:
        detail::compare_keypoint(m, d.left.at(0), src.left.at(0), true);
        detail::compare_keypoint(m, d.right.at(0), src.right.at(0), true);
        break;
      case Variant::AFQuat6D:
        detail::compare_keypoint(m, d.left.at(0), src.left.at(0), true);
        detail::compare_keypoint(m, d.right.at(0), src.right.at(0), true);
        detail::compare_quat(m, *d.orientation_left, src.orientation_left);
        detail::compare_quat(m, *d.orientation_right, src.orientation_right);
        break;
      case Variant::AFEuler6D:
        detail::compare_keypoint(m, d.left.at(0), src.left.at(0), true);
        detail::compare_keypoint(m, d.right.at(0), src.right.at(0), true);
        detail::compare_euler(m, *d.euler_left, src.orientation_left);
        detail::compare_euler(m, *d.euler_right, src.orientation_right);
        break;
      case Variant::AFBinned:
        break;
      case Variant::MultiPoint:
        for (std::size_t j = 0; j < src.left.size(); ++j) {
          detail::compare_keypoint(m, d.left.at(j), src.left[j], true);
          detail::compare_keypoint(m, d.right.at(j), src.right[j], true);
        }
        break;
    }
    if (schema.has_bins()) {
      const EulerAngles truth = EulerAngles::from_quaternion(src.orientation_left);
      const BinScheme bs = schema.bin_scheme();
      for (int ax = 0; ax < 3; ++ax) {
        if (!bs.full && ax != static_cast<int>(bs.axis)) continue;
        detail::track_max(st.max_quant_error, wrap_angle(d.bin_center->axis(ax) - truth.axis(ax)));
      }
    }
  }
  return st;
}

// Tip pose from decoded MultiPoint keypoints: rigid fit of the canonical
// keypoints to their back-projections.
inline Pose pose_from_multipoint(const DecodedFields& d, const StereoRig& rig, const FieldSchema& schema) {
  std::vector<Vec3> pts;
  for (const auto& kp : d.left) pts.push_back(keypoint_to_point(rig.left, denormalize_keypoint(rig.left, kp)));
  const Quaternion q = orientation_from_keypoints(pts, schema.keypoints);
  Vec3 pm = Vec3::Zero(), cm = Vec3::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pm += pts[i];
    cm += schema.keypoints[i];
  }
  const double n = static_cast<double>(pts.size());
  return {q, pm / n - q.rotate(cm / n)};
}

// Turns a head output into the single post-NMS prediction row for a frame.
// Returns nullopt when no anchor clears `min_score`.
inline std::optional<LabelRow> predict_from_output(const EncodedTarget& output,
                                                   const std::vector<AnchorBox>& anchors,
                                                   const FieldSchema& schema, const StereoRig& rig,
                                                   double t, std::int64_t frame_id,
                                                   double min_score = kDefaultScoreThreshold,
                                                   double nms_iou = 0.5) {
  const auto dets = nms_select(decode_detections(output, anchors, min_score), nms_iou, 1);
  if (dets.empty()) return std::nullopt;
  const Detection& det = dets.front();
  const DecodedFields d = decode_fields(schema, anchors[det.anchor], det.fields);
  LabelRow row;
  row.t = t;
  row.frame_id = frame_id;
  row.box_l = det.box;
  row.box_r = det.box;
  row.score = det.class_score;
  if (schema.variant == Variant::MultiPoint) {
    const Pose tip = pose_from_multipoint(d, rig, schema);
    row.q = tip.rotation.canonical();
    const Vec3 pr = rig.to_right(tip.translation);
    const Vec2 ul = project(rig.left, tip.translation);
    const Vec2 ur = project(rig.right, pr);
    row.kp_l = {ul.x(), ul.y(), tip.translation.z()};
    row.kp_r = {ur.x(), ur.y(), pr.z()};
    return row;
  }
  if (!d.left.empty()) row.kp_l = denormalize_keypoint(rig.left, d.left[0]);
  if (!d.right.empty()) row.kp_r = denormalize_keypoint(rig.right, d.right[0]);
  if (d.orientation_left) row.q = d.orientation_left->canonical();
  if (schema.has_bins()) {
    row.bin_scores.assign(det.fields.begin() + static_cast<std::ptrdiff_t>(schema.regression_count()),
                          det.fields.end());
  }
  return row;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalInputs {
  bool has_depth{true};        // xyz errors from kp_l depth
  bool has_orientation{false};
  std::optional<BinScheme> bins;
};

// Pairs label rows with prediction rows by frame id.
inline std::vector<EvalFrame> build_eval_frames(const std::vector<LabelRow>& labels,
                                                const std::vector<LabelRow>& predictions,
                                                const StereoRig& rig, const EvalInputs& in = {}) {
  std::map<std::int64_t, const LabelRow*> by_id;
  for (const auto& p : predictions) by_id[p.frame_id] = &p;
  std::vector<EvalFrame> frames;
  frames.reserve(labels.size());
  for (const auto& g : labels) {
    EvalFrame f;
    f.frame_id = g.frame_id;
    if (g.label == ClassLabel::right_hand) f.gt_box = g.box_l;
    const auto it = by_id.find(g.frame_id);
    if (it != by_id.end()) {
      const LabelRow& p = *it->second;
      Detection det;
      det.box = p.box_l;
      det.class_score = p.score.value_or(1.0);
      f.pred = det;
      if (g.label == ClassLabel::right_hand) {
        f.gt_uv = Vec2{g.kp_l.u, g.kp_l.v};
        f.pred_uv = Vec2{p.kp_l.u, p.kp_l.v};
        if (in.has_depth) {
          f.gt_xyz = keypoint_to_point(rig.left, g.kp_l);
          f.pred_xyz = keypoint_to_point(rig.left, p.kp_l);
        }
        if (in.has_orientation) {
          f.gt_q = g.q;
          f.pred_q = p.q;
        }
        if (in.bins) {
          f.gt_bin = bin_orientation(g.q, *in.bins);
          f.pred_bin_scores = p.bin_scores;
        }
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace hmdtrack
