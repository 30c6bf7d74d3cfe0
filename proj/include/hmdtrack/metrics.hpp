#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "hmdtrack/box.hpp"
#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"
#include "hmdtrack/ssdaf.hpp"

namespace hmdtrack {

inline constexpr double kDefaultScoreThreshold = 0.0001;
inline constexpr double kDefaultIouThreshold = 0.05;

enum class DetectionOutcome { TP, FP, TN, FN };

// Comparisons are strict as written: a score equal to t_c is neither a
// confident detection nor a confident rejection and lands in FP. A missing
// prediction counts as score 0.
inline DetectionOutcome classify_detection(const std::optional<Box2D>& gt,
                                           const std::optional<Detection>& pred,
                                           double t_c = kDefaultScoreThreshold,
                                           double t_iou = kDefaultIouThreshold) {
  const double score = pred ? pred->class_score : 0.0;
  if (!gt && score < t_c) return DetectionOutcome::TN;
  if (gt && pred && score > t_c && iou(*gt, pred->box) > t_iou) return DetectionOutcome::TP;
  if (gt && score < t_c) return DetectionOutcome::FN;
  return DetectionOutcome::FP;
}

// tp / (tp + fp), and 1 when nothing was predicted positive.
inline double precision(const std::vector<DetectionOutcome>& outcomes) {
  std::size_t tp = 0, fp = 0;
  for (auto o : outcomes) {
    tp += o == DetectionOutcome::TP;
    fp += o == DetectionOutcome::FP;
  }
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

struct ErrorStats {
  double mae{0.0};
  double rmse{0.0};
};

inline ErrorStats error_stats(const std::vector<double>& errors) {
  if (errors.empty()) throw Error("no true positives to evaluate");
  double s = 0.0, s2 = 0.0;
  for (double e : errors) {
    s += std::abs(e);
    s2 += e * e;
  }
  const double n = static_cast<double>(errors.size());
  return {s / n, std::sqrt(s2 / n)};
}

// Euclidean error per sample, for uv (pixels) or xyz (meters).
template <typename Vec>
ErrorStats pose_errors(const std::vector<std::pair<Vec, Vec>>& samples) {
  std::vector<double> d;
  d.reserve(samples.size());
  for (const auto& [gt, pred] : samples) d.push_back((pred - gt).norm());
  return error_stats(d);
}

// Per-axis absolute Euler differences, wrapped to (-pi, pi], in (yaw, pitch,
// roll) order.
inline std::array<ErrorStats, 3> orientation_errors(
    const std::vector<std::pair<Quaternion, Quaternion>>& samples) {
  std::array<std::vector<double>, 3> per_axis;
  for (const auto& [gt, pred] : samples) {
    const EulerAngles a = EulerAngles::from_quaternion(gt);
    const EulerAngles b = EulerAngles::from_quaternion(pred);
    for (int i = 0; i < 3; ++i) per_axis[i].push_back(std::abs(wrap_angle(b.axis(i) - a.axis(i))));
  }
  return {error_stats(per_axis[0]), error_stats(per_axis[1]), error_stats(per_axis[2])};
}

// Fraction of samples whose argmax bin matches the groundtruth bin.
inline double bin_map(const std::vector<std::pair<int, std::vector<double>>>& samples) {
  if (samples.empty()) throw Error("no samples for bin mAP");
  std::size_t hits = 0;
  for (const auto& [gt, scores] : samples) {
    if (scores.empty()) throw Error("empty bin score vector");
    const auto arg = std::max_element(scores.begin(), scores.end()) - scores.begin();
    hits += arg == gt;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// One evaluated frame: groundtruth and (optionally) the single post-NMS
// prediction, with whatever pose quantities both sides carry.
struct EvalFrame {
  std::int64_t frame_id{0};
  std::optional<Box2D> gt_box;
  std::optional<Detection> pred;
  std::optional<Vec2> gt_uv, pred_uv;
  std::optional<Vec3> gt_xyz, pred_xyz;
  std::optional<Quaternion> gt_q, pred_q;
  std::optional<int> gt_bin;
  std::vector<double> pred_bin_scores;
};

struct EvalOptions {
  double t_c{kDefaultScoreThreshold};
  double t_iou{kDefaultIouThreshold};  // threshold defining TPs for pose errors
  std::vector<double> iou_thresholds{0.05, 0.25, 0.5};
  std::vector<double> sweep_scores{};  // optional t_c sweep at t_iou
};

struct FrameError {
  std::int64_t frame_id{0};
  DetectionOutcome outcome{DetectionOutcome::TN};
  std::optional<double> uv_error, xyz_error;
  std::optional<std::array<double, 3>> orient_error;
};

struct MetricsReport {
  std::map<double, double> map_at;
  std::map<double, double> sweep;
  std::optional<ErrorStats> uv, xyz;
  std::optional<std::array<ErrorStats, 3>> orient;
  std::optional<double> bin_map;
  std::array<std::size_t, 4> counts{};  // TP, FP, TN, FN at t_iou
  std::vector<FrameError> frames;

  std::size_t count(DetectionOutcome o) const { return counts[static_cast<std::size_t>(o)]; }
};

inline MetricsReport evaluate(const std::vector<EvalFrame>& frames, const EvalOptions& opt = {}) {
  MetricsReport rep;
  auto outcomes_at = [&](double t_c, double t_iou) {
    std::vector<DetectionOutcome> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(classify_detection(f.gt_box, f.pred, t_c, t_iou));
    return out;
  };
  for (double t : opt.iou_thresholds) rep.map_at[t] = precision(outcomes_at(opt.t_c, t));
  for (double t : opt.sweep_scores) rep.sweep[t] = precision(outcomes_at(t, opt.t_iou));

  std::vector<std::pair<Vec2, Vec2>> uv;
  std::vector<std::pair<Vec3, Vec3>> xyz;
  std::vector<std::pair<Quaternion, Quaternion>> q;
  std::vector<std::pair<int, std::vector<double>>> bins;
  const auto primary = outcomes_at(opt.t_c, opt.t_iou);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const EvalFrame& f = frames[i];
    FrameError fe;
    fe.frame_id = f.frame_id;
    fe.outcome = primary[i];
    ++rep.counts[static_cast<std::size_t>(primary[i])];
    if (primary[i] == DetectionOutcome::TP) {
      if (f.gt_uv && f.pred_uv) {
        uv.emplace_back(*f.gt_uv, *f.pred_uv);
        fe.uv_error = (*f.pred_uv - *f.gt_uv).norm();
      }
      if (f.gt_xyz && f.pred_xyz) {
        xyz.emplace_back(*f.gt_xyz, *f.pred_xyz);
        fe.xyz_error = (*f.pred_xyz - *f.gt_xyz).norm();
      }
      if (f.gt_q && f.pred_q) {
        q.emplace_back(*f.gt_q, *f.pred_q);
        const EulerAngles a = EulerAngles::from_quaternion(*f.gt_q);
        const EulerAngles b = EulerAngles::from_quaternion(*f.pred_q);
        std::array<double, 3> e{};
        for (int k = 0; k < 3; ++k) e[static_cast<std::size_t>(k)] = std::abs(wrap_angle(b.axis(k) - a.axis(k)));
        fe.orient_error = e;
      }
      if (f.gt_bin && !f.pred_bin_scores.empty()) bins.emplace_back(*f.gt_bin, f.pred_bin_scores);
    }
    rep.frames.push_back(fe);
  }
  if (!uv.empty()) rep.uv = pose_errors(uv);
  if (!xyz.empty()) rep.xyz = pose_errors(xyz);
  if (!q.empty()) rep.orient = orientation_errors(q);
  if (!bins.empty()) rep.bin_map = bin_map(bins);
  return rep;
}

}  // namespace hmdtrack
