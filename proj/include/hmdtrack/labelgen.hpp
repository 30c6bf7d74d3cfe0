#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hmdtrack/box.hpp"
#include "hmdtrack/camera.hpp"
#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"

namespace hmdtrack {

inline constexpr double kMaxTipRange = 1.0;         // meters from the camera
inline constexpr std::size_t kReinitFrames = 20;    // camera frames dropped after a tracking gap
inline constexpr double kSuspectThreshold = 0.03;   // meters of prediction error

// Hand cube bounds in the controller-tip frame, meters, per axis {min, max}.
inline constexpr std::array<std::array<double, 2>, 3> kHandCubeBounds{
    {{-0.03, 0.05}, {-0.05, 0.01}, {-0.01, 0.10}}};

struct FrameRecord {
  double timestamp{0.0};
  std::int64_t frame_id{0};
  std::optional<std::pair<std::string, std::string>> image_refs{};
  Pose T_Cam_CT{};    // tip in the left-camera frame
  Pose T_World_Cam{};  // left camera in the headset tracker's world frame
  bool tracking_valid{true};
};

// Pixel coordinates plus depth along the camera z axis.
struct Keypoint {
  double u{0.0};
  double v{0.0};
  double z{0.0};
};

enum class ClassLabel { right_hand, background };

struct LabeledSample {
  FrameRecord record;
  Box2D box_left;
  Box2D box_right;
  Keypoint keypoint_left;
  Keypoint keypoint_right;
  ClassLabel class_label{ClassLabel::right_hand};
};

struct CleanReport {
  std::size_t kept{0};
  std::size_t dropped_range{0};
  std::size_t dropped_missing{0};
  std::size_t dropped_reinit{0};
  std::size_t flagged_suspect{0};

  std::size_t total() const { return kept + dropped_range + dropped_missing + dropped_reinit; }
};

// Corners ordered as the Cartesian product x-major, then y, then z.
inline std::array<Vec3, 8> bounding_cube_corners(const Pose& T_Cam_CT) {
  std::array<Vec3, 8> out;
  std::size_t i = 0;
  for (double x : kHandCubeBounds[0]) {
    for (double y : kHandCubeBounds[1]) {
      for (double z : kHandCubeBounds[2]) out[i++] = T_Cam_CT.transform({x, y, z});
    }
  }
  return out;
}

// Unclipped pixel extent of the projected corners that are inside the field
// of view.
struct PixelExtent {
  double xmin{std::numeric_limits<double>::infinity()};
  double ymin{std::numeric_limits<double>::infinity()};
  double xmax{-std::numeric_limits<double>::infinity()};
  double ymax{-std::numeric_limits<double>::infinity()};
  std::vector<Vec2> projections;
};

inline PixelExtent project_corners(const std::array<Vec3, 8>& corners, const FisheyeCamera& cam) {
  PixelExtent e;
  for (const auto& c : corners) {
    if (!in_field_of_view(cam, c)) continue;
    const Vec2 uv = project(cam, c);
    e.projections.push_back(uv);
    e.xmin = std::min(e.xmin, uv.x());
    e.ymin = std::min(e.ymin, uv.y());
    e.xmax = std::max(e.xmax, uv.x());
    e.ymax = std::max(e.ymax, uv.y());
  }
  return e;
}

// Smallest axis-aligned box around the visible projected corners, clipped to
// the image and normalized to [0, 1].
inline Box2D project_hand_box(const std::array<Vec3, 8>& corners, const FisheyeCamera& cam) {
  const PixelExtent e = project_corners(corners, cam);
  if (e.projections.empty()) throw Error("hand not visible");
  const double W = cam.width, H = cam.height;
  const double x0 = std::clamp(e.xmin, 0.0, W), x1 = std::clamp(e.xmax, 0.0, W);
  const double y0 = std::clamp(e.ymin, 0.0, H), y1 = std::clamp(e.ymax, 0.0, H);
  if (!(x1 > x0) || !(y1 > y0)) throw Error("hand not visible");
  return Box2D::from_corners(x0 / W, y0 / H, x1 / W, y1 / H);
}

inline Keypoint project_keypoint(const FisheyeCamera& cam, const Vec3& p) {
  if (!in_field_of_view(cam, p)) throw Error("tip not visible");
  const Vec2 uv = project(cam, p);
  if (!cam.contains(uv)) throw Error("tip not visible");
  return {uv.x(), uv.y(), p.z()};
}

// Builds both-camera labels for one record. Throws when the hand or the tip
// is not visible in either image.
inline LabeledSample make_labeled_sample(const FrameRecord& record, const StereoRig& rig) {
  LabeledSample s;
  s.record = record;
  const auto corners_l = bounding_cube_corners(record.T_Cam_CT);
  std::array<Vec3, 8> corners_r;
  for (std::size_t i = 0; i < 8; ++i) corners_r[i] = rig.to_right(corners_l[i]);
  s.box_left = project_hand_box(corners_l, rig.left);
  s.box_right = project_hand_box(corners_r, rig.right);
  const Vec3 tip = record.T_Cam_CT.translation;
  s.keypoint_left = project_keypoint(rig.left, tip);
  s.keypoint_right = project_keypoint(rig.right, rig.to_right(tip));
  s.class_label = ClassLabel::right_hand;
  return s;
}

// Recovers the tip position in the left-camera frame from its keypoint.
inline Vec3 keypoint_to_point(const FisheyeCamera& cam, const Keypoint& kp) {
  const Vec3 ray = unproject(cam, {kp.u, kp.v});
  return ray * (kp.z / ray.z());
}

// One line of a label (or prediction) file. Predictions additionally carry a
// class score and, for binned models, per-bin scores.
struct LabelRow {
  double t{0.0};
  std::int64_t frame_id{0};
  Box2D box_l;
  Box2D box_r;
  Keypoint kp_l;
  Keypoint kp_r;
  Quaternion q{};
  ClassLabel label{ClassLabel::right_hand};
  std::optional<double> score{};
  std::vector<double> bin_scores{};
};

inline LabelRow to_label_row(const LabeledSample& s) {
  LabelRow r;
  r.t = s.record.timestamp;
  r.frame_id = s.record.frame_id;
  r.box_l = s.box_left;
  r.box_r = s.box_right;
  r.kp_l = s.keypoint_left;
  r.kp_r = s.keypoint_right;
  r.q = s.record.T_Cam_CT.rotation.canonical();
  r.label = s.class_label;
  return r;
}

// Rebuilds the in-memory sample; the tip pose comes from the left keypoint
// and its depth.
inline LabeledSample from_label_row(const LabelRow& r, const StereoRig& rig) {
  LabeledSample s;
  s.record.timestamp = r.t;
  s.record.frame_id = r.frame_id;
  s.record.T_Cam_CT = {r.q, keypoint_to_point(rig.left, r.kp_l)};
  s.box_left = r.box_l;
  s.box_right = r.box_r;
  s.keypoint_left = r.kp_l;
  s.keypoint_right = r.kp_r;
  s.class_label = r.label;
  return s;
}

// Drops, in priority order: frames without tracking, the kReinitFrames frames
// that follow each tracking gap, and frames with the tip beyond kMaxTipRange.
inline std::pair<std::vector<FrameRecord>, CleanReport> clean_dataset(
    const std::vector<FrameRecord>& records) {
  std::vector<FrameRecord> kept;
  CleanReport report;
  std::size_t reinit_left = 0;
  for (const auto& r : records) {
    if (!r.tracking_valid) {
      ++report.dropped_missing;
      reinit_left = kReinitFrames;
      continue;
    }
    if (reinit_left > 0) {
      --reinit_left;
      ++report.dropped_reinit;
      continue;
    }
    if (r.T_Cam_CT.translation.norm() > kMaxTipRange) {
      ++report.dropped_range;
      continue;
    }
    kept.push_back(r);
    ++report.kept;
  }
  return {std::move(kept), report};
}

// Frame ids whose predicted tip position is more than kSuspectThreshold away
// from the label, queued for manual review.
inline std::vector<std::int64_t> flag_suspect_frames(const std::vector<LabeledSample>& samples,
                                                     const std::vector<Vec3>& predictions) {
  if (samples.size() != predictions.size()) throw Error("prediction/record count mismatch");
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if ((predictions[i] - samples[i].record.T_Cam_CT.translation).norm() > kSuspectThreshold) {
      ids.push_back(samples[i].record.frame_id);
    }
  }
  return ids;
}

// Mirrors a sample top-to-bottom (camera y axis), used to turn left-hand
// recordings into right-hand training data.
inline LabeledSample flip_vertical(const LabeledSample& s, const StereoRig& rig) {
  LabeledSample out = s;
  auto flip_pose = [](const Pose& p) {
    const Quaternion& q = p.rotation;
    return Pose{Quaternion{q.w, -q.x, q.y, -q.z}, Vec3{p.translation.x(), -p.translation.y(),
                                                       p.translation.z()}};
  };
  out.record.T_Cam_CT = flip_pose(s.record.T_Cam_CT);
  out.box_left.cy = 1.0 - s.box_left.cy;
  out.box_right.cy = 1.0 - s.box_right.cy;
  out.keypoint_left.v = 2.0 * rig.left.cy - s.keypoint_left.v;
  out.keypoint_right.v = 2.0 * rig.right.cy - s.keypoint_right.v;
  return out;
}

}  // namespace hmdtrack
