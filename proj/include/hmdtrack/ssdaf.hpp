#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmdtrack/box.hpp"
#include "hmdtrack/camera.hpp"
#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"
#include "hmdtrack/labelgen.hpp"

namespace hmdtrack {

// ---------------------------------------------------------------------------
// Anchors
// ---------------------------------------------------------------------------

struct AnchorBox {
  double x{0.5};  // normalized center
  double y{0.5};
  double w{1.0};  // normalized extent
  double h{1.0};
  int layer_id{0};
  int cell{0};

  Box2D box() const { return {x, y, w, h}; }
};

struct AnchorLayer {
  int grid_w{1};
  int grid_h{1};
  double scale{1.0};
  std::vector<double> aspects{1.0};
};

struct AnchorConfig {
  std::vector<AnchorLayer> layers;

  // Three feature maps for a 320x240 input.
  static AnchorConfig defaults() {
    const std::vector<double> aspects{1.0, 2.0, 0.5};
    return {{{20, 15, 0.2, aspects}, {10, 8, 0.45, aspects}, {5, 4, 0.7, aspects}}};
  }
};

// One anchor per (layer, row, column, aspect) in that order. Width and height
// are scale * sqrt(aspect) and scale / sqrt(aspect), capped at 1.
inline std::vector<AnchorBox> generate_anchors(const AnchorConfig& config) {
  if (config.layers.empty()) throw Error("anchor config has no layers");
  std::vector<AnchorBox> out;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    const AnchorLayer& L = config.layers[l];
    if (L.grid_w <= 0 || L.grid_h <= 0 || !(L.scale > 0.0) || L.aspects.empty()) {
      throw Error("invalid anchor layer " + std::to_string(l));
    }
    for (int r = 0; r < L.grid_h; ++r) {
      for (int c = 0; c < L.grid_w; ++c) {
        for (double a : L.aspects) {
          if (!(a > 0.0)) throw Error("aspect ratio must be positive");
          AnchorBox b;
          b.x = (c + 0.5) / L.grid_w;
          b.y = (r + 0.5) / L.grid_h;
          b.w = std::min(1.0, L.scale * std::sqrt(a));
          b.h = std::min(1.0, L.scale / std::sqrt(a));
          b.layer_id = static_cast<int>(l);
          b.cell = r * L.grid_w + c;
          out.push_back(b);
        }
      }
    }
  }
  return out;
}

inline constexpr double kMatchIou = 0.5;

// gt_index[i] is the groundtruth matched to anchor i, or -1 for background.
struct Assignment {
  std::vector<int> gt_index;

  std::size_t matched_count() const {
    return static_cast<std::size_t>(
        std::count_if(gt_index.begin(), gt_index.end(), [](int g) { return g >= 0; }));
  }
  bool matched(std::size_t i) const { return gt_index[i] >= 0; }
};

// Threshold matching (IOU > kMatchIou, best groundtruth wins) plus the single
// best anchor of every groundtruth, ties to the lowest anchor index.
inline Assignment match_anchors(const std::vector<Box2D>& gt_boxes,
                                const std::vector<AnchorBox>& anchors,
                                double threshold = kMatchIou) {
  Assignment a;
  a.gt_index.assign(anchors.size(), -1);
  std::vector<double> best(anchors.size(), 0.0);
  for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const double v = iou(gt_boxes[g], anchors[i].box());
      if (v > threshold && v > best[i]) {
        best[i] = v;
        a.gt_index[i] = static_cast<int>(g);
      }
    }
  }
  for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
    std::size_t arg = 0;
    double top = -1.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const double v = iou(gt_boxes[g], anchors[i].box());
      if (v > top) {
        top = v;
        arg = i;
      }
    }
    if (!anchors.empty()) a.gt_index[arg] = static_cast<int>(g);
  }
  return a;
}

inline std::array<double, 4> encode_box(const AnchorBox& a, const Box2D& b) {
  return {(b.cx - a.x) / a.w, (b.cy - a.y) / a.h, std::log(b.w / a.w), std::log(b.h / a.h)};
}

inline Box2D decode_box(const AnchorBox& a, const std::array<double, 4>& t) {
  return {a.x + t[0] * a.w, a.y + t[1] * a.h, a.w * std::exp(t[2]), a.h * std::exp(t[3])};
}

// ---------------------------------------------------------------------------
// Field schemas
// ---------------------------------------------------------------------------

enum class Variant {
  AF2D,
  AF3D,
  AFStereo3D,
  AFQuat6D,
  AFEuler6D,
  AFBinned,
  AF3DBinned,
  AxisBinned,
  MultiPoint,
};

enum class Axis { yaw = 0, pitch = 1, roll = 2 };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::AF2D: return "AF2D";
    case Variant::AF3D: return "AF3D";
    case Variant::AFStereo3D: return "AFStereo3D";
    case Variant::AFQuat6D: return "AFQuat6D";
    case Variant::AFEuler6D: return "AFEuler6D";
    case Variant::AFBinned: return "AFBinned";
    case Variant::AF3DBinned: return "AF3DBinned";
    case Variant::AxisBinned: return "AxisBinned";
    case Variant::MultiPoint: return "MultiPoint";
  }
  return "";
}

inline Variant variant_from_string(std::string_view s) {
  for (Variant v : {Variant::AF2D, Variant::AF3D, Variant::AFStereo3D, Variant::AFQuat6D,
                    Variant::AFEuler6D, Variant::AFBinned, Variant::AF3DBinned,
                    Variant::AxisBinned, Variant::MultiPoint}) {
    if (to_string(v) == s) return v;
  }
  throw Error("unknown schema variant '" + std::string(s) + "'");
}

inline std::string_view to_string(Axis a) {
  return a == Axis::yaw ? "yaw" : (a == Axis::pitch ? "pitch" : "roll");
}

inline Axis axis_from_string(std::string_view s) {
  if (s == "yaw") return Axis::yaw;
  if (s == "pitch") return Axis::pitch;
  if (s == "roll") return Axis::roll;
  throw Error("unknown axis '" + std::string(s) + "'");
}

// Four non-coplanar corners of the hand cube, tip frame, meters.
inline std::vector<Vec3> default_canonical_keypoints() {
  return {{-0.03, -0.05, -0.01}, {0.05, -0.05, -0.01}, {-0.03, 0.01, -0.01}, {-0.03, -0.05, 0.10}};
}

struct BinScheme {
  bool full{true};  // full: product grid over (yaw, pitch, roll); otherwise one axis
  int bins{27};
  Axis axis{Axis::yaw};

  static BinScheme full_grid(int b) { return {true, b, Axis::yaw}; }
  static BinScheme per_axis(Axis axis, int b) { return {false, b, axis}; }

  int cells_per_axis() const {
    if (!full) return bins;
    const int s = static_cast<int>(std::lround(std::cbrt(static_cast<double>(bins))));
    if (s < 1 || s * s * s != bins) throw Error("full-grid bin count must be a perfect cube");
    return s;
  }
  double width() const { return 2.0 * kPi / cells_per_axis(); }
};

struct FieldSchema {
  Variant variant{Variant::AF3D};
  int bins{0};
  Axis axis{Axis::yaw};
  std::vector<Vec3> keypoints{};  // canonical tip-frame points, MultiPoint only

  static FieldSchema of(Variant v) {
    FieldSchema s;
    s.variant = v;
    if (v == Variant::MultiPoint) s.keypoints = default_canonical_keypoints();
    return s;
  }
  static FieldSchema binned(Variant v, int b, Axis axis = Axis::yaw) {
    FieldSchema s;
    s.variant = v;
    s.bins = b;
    s.axis = axis;
    return s;
  }

  bool has_bins() const {
    return variant == Variant::AFBinned || variant == Variant::AF3DBinned ||
           variant == Variant::AxisBinned;
  }

  BinScheme bin_scheme() const {
    return variant == Variant::AxisBinned ? BinScheme::per_axis(axis, bins)
                                          : BinScheme::full_grid(bins);
  }

  // Number of leading regression fields; bin probabilities follow them.
  std::size_t regression_count() const {
    switch (variant) {
      case Variant::AF2D: return 2;
      case Variant::AF3D: return 3;
      case Variant::AFStereo3D: return 6;
      case Variant::AFQuat6D: return 14;
      case Variant::AFEuler6D: return 12;
      case Variant::AFBinned: return 0;
      case Variant::AF3DBinned:
      case Variant::AxisBinned: return 3;
      case Variant::MultiPoint: return 6 * keypoints.size();
    }
    return 0;
  }

  std::size_t k() const {
    return regression_count() + (has_bins() ? static_cast<std::size_t>(bins) : 0);
  }

  void validate() const {
    if (has_bins()) {
      if (bins <= 0) throw Error("bin count must be positive");
      bin_scheme().cells_per_axis();
    }
    if (variant == Variant::MultiPoint) {
      if (keypoints.size() < 3) throw Error("MultiPoint needs at least 3 keypoints");
    }
  }
};

// ---------------------------------------------------------------------------
// Orientation binning
// ---------------------------------------------------------------------------

inline int angle_cell(double angle, int cells) {
  double a = wrap_angle(angle);
  if (a >= kPi) a = -kPi;  // [-pi, pi)
  const int i = static_cast<int>(std::floor((a + kPi) / (2.0 * kPi) * cells));
  return std::clamp(i, 0, cells - 1);
}

inline double cell_center(int i, int cells) { return -kPi + (i + 0.5) * 2.0 * kPi / cells; }

inline int bin_orientation(const Quaternion& q, const BinScheme& scheme) {
  const int s = scheme.cells_per_axis();
  const EulerAngles e = EulerAngles::from_quaternion(q);
  if (!scheme.full) return angle_cell(e.axis(static_cast<int>(scheme.axis)), s);
  return angle_cell(e.yaw, s) * s * s + angle_cell(e.pitch, s) * s + angle_cell(e.roll, s);
}

// Center orientation of a bin. For per-axis schemes only the binned axis is
// set; the others are zero.
inline EulerAngles bin_center(int index, const BinScheme& scheme) {
  const int s = scheme.cells_per_axis();
  const int total = scheme.full ? s * s * s : s;
  if (index < 0 || index >= total) throw Error("bin index out of range");
  EulerAngles e;
  if (scheme.full) {
    e.yaw = cell_center(index / (s * s), s);
    e.pitch = cell_center((index / s) % s, s);
    e.roll = cell_center(index % s, s);
  } else {
    const double c = cell_center(index, s);
    if (scheme.axis == Axis::yaw) e.yaw = c;
    if (scheme.axis == Axis::pitch) e.pitch = c;
    if (scheme.axis == Axis::roll) e.roll = c;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Field encoding
// ---------------------------------------------------------------------------

// Keypoint in normalized image coordinates plus depth in meters.
struct FieldKeypoint {
  double u{0.0};
  double v{0.0};
  double z{0.0};
};

// Everything a schema can encode for one groundtruth hand. Index 0 of the
// keypoint lists is the tip unless the schema is MultiPoint, in which case
// they are the canonical keypoints in order.
struct FieldSource {
  std::vector<FieldKeypoint> left;
  std::vector<FieldKeypoint> right;
  Quaternion orientation_left{};   // tip orientation in the left-camera frame
  Quaternion orientation_right{};  // same, right-camera frame
};

inline FieldKeypoint normalize_keypoint(const FisheyeCamera& cam, const Keypoint& kp) {
  return {kp.u / cam.width, kp.v / cam.height, kp.z};
}

inline Keypoint denormalize_keypoint(const FisheyeCamera& cam, const FieldKeypoint& kp) {
  return {kp.u * cam.width, kp.v * cam.height, kp.z};
}

inline FieldSource make_field_source(const LabeledSample& s, const StereoRig& rig,
                                     const FieldSchema& schema) {
  FieldSource src;
  const Pose& T = s.record.T_Cam_CT;
  src.orientation_left = T.rotation;
  src.orientation_right = rig.T_left_right.rotation.conjugate() * T.rotation;
  if (schema.variant == Variant::MultiPoint) {
    for (const Vec3& c : schema.keypoints) {
      const Vec3 p = T.transform(c);
      src.left.push_back(normalize_keypoint(rig.left, project_keypoint(rig.left, p)));
      src.right.push_back(
          normalize_keypoint(rig.right, project_keypoint(rig.right, rig.to_right(p))));
    }
  } else {
    src.left.push_back(normalize_keypoint(rig.left, s.keypoint_left));
    src.right.push_back(normalize_keypoint(rig.right, s.keypoint_right));
  }
  return src;
}

namespace detail {

inline void push_keypoint(std::vector<double>& out, const AnchorBox& a, const FieldKeypoint& kp) {
  out.push_back((kp.u - a.x) / a.w);
  out.push_back((kp.v - a.y) / a.h);
  out.push_back(kp.z / a.h);
}

inline FieldKeypoint read_keypoint(const AnchorBox& a, const double* f) {
  return {a.x + f[0] * a.w, a.y + f[1] * a.h, f[2] * a.h};
}

// Raw Euler fields in (pitch, yaw, roll) order.
inline void push_euler(std::vector<double>& out, const Quaternion& q) {
  const EulerAngles e = EulerAngles::from_quaternion(q);
  out.insert(out.end(), {e.pitch, e.yaw, e.roll});
}

inline void push_quat(std::vector<double>& out, const Quaternion& q) {
  const Quaternion c = q.canonical();
  out.insert(out.end(), {c.x, c.y, c.z, c.w});
}

inline void push_one_hot(std::vector<double>& out, int index, int bins) {
  for (int i = 0; i < bins; ++i) out.push_back(i == index ? 1.0 : 0.0);
}

}  // namespace detail

// Keypoints relative to the anchor: t_u = (u - x_a) / w_a, t_v = (v - y_a) / h_a,
// t_z = z / h_a. Orientation fields are appended without anchor encoding;
// quaternions are canonicalized to w >= 0 and stored (x, y, z, w).
inline std::vector<double> encode_fields(const FieldSchema& schema, const AnchorBox& anchor,
                                         const FieldSource& src) {
  std::vector<double> f;
  f.reserve(schema.k());
  const FieldKeypoint& tl = src.left.at(0);
  switch (schema.variant) {
    case Variant::AF2D:
      f.push_back((tl.u - anchor.x) / anchor.w);
      f.push_back((tl.v - anchor.y) / anchor.h);
      break;
    case Variant::AF3D:
      detail::push_keypoint(f, anchor, tl);
      break;
    case Variant::AFStereo3D:
      detail::push_keypoint(f, anchor, tl);
      detail::push_keypoint(f, anchor, src.right.at(0));
      break;
    case Variant::AFQuat6D:
      detail::push_keypoint(f, anchor, tl);
      detail::push_quat(f, src.orientation_left);
      detail::push_keypoint(f, anchor, src.right.at(0));
      detail::push_quat(f, src.orientation_right);
      break;
    case Variant::AFEuler6D:
      detail::push_keypoint(f, anchor, tl);
      detail::push_euler(f, src.orientation_left);
      detail::push_keypoint(f, anchor, src.right.at(0));
      detail::push_euler(f, src.orientation_right);
      break;
    case Variant::AFBinned:
      detail::push_one_hot(f, bin_orientation(src.orientation_left, schema.bin_scheme()),
                           schema.bins);
      break;
    case Variant::AF3DBinned:
    case Variant::AxisBinned:
      detail::push_keypoint(f, anchor, tl);
      detail::push_one_hot(f, bin_orientation(src.orientation_left, schema.bin_scheme()),
                           schema.bins);
      break;
    case Variant::MultiPoint:
      if (src.left.size() != schema.keypoints.size() || src.right.size() != schema.keypoints.size()) {
        throw Error("MultiPoint source does not match schema keypoints");
      }
      for (const auto& kp : src.left) detail::push_keypoint(f, anchor, kp);
      for (const auto& kp : src.right) detail::push_keypoint(f, anchor, kp);
      break;
  }
  return f;
}

struct DecodedFields {
  std::vector<FieldKeypoint> left;
  std::vector<FieldKeypoint> right;
  std::optional<Quaternion> orientation_left;
  std::optional<Quaternion> orientation_right;
  std::optional<EulerAngles> euler_left;
  std::optional<EulerAngles> euler_right;
  std::optional<int> bin;
  std::optional<EulerAngles> bin_center;
};

inline DecodedFields decode_fields(const FieldSchema& schema, const AnchorBox& anchor,
                                   const std::vector<double>& fields) {
  if (fields.size() != schema.k()) {
    throw Error("field count " + std::to_string(fields.size()) + " does not match schema k " +
                std::to_string(schema.k()));
  }
  DecodedFields d;
  const double* f = fields.data();
  auto quat_at = [](const double* p) { return Quaternion{p[3], p[0], p[1], p[2]}.normalized(); };
  auto euler_at = [](const double* p) {
    EulerAngles e;
    e.pitch = p[0];
    e.yaw = p[1];
    e.roll = p[2];
    return e;
  };
  switch (schema.variant) {
    case Variant::AF2D:
      d.left.push_back({anchor.x + f[0] * anchor.w, anchor.y + f[1] * anchor.h, 0.0});
      break;
    case Variant::AF3D:
      d.left.push_back(detail::read_keypoint(anchor, f));
      break;
    case Variant::AFStereo3D:
      d.left.push_back(detail::read_keypoint(anchor, f));
      d.right.push_back(detail::read_keypoint(anchor, f + 3));
      break;
    case Variant::AFQuat6D:
      d.left.push_back(detail::read_keypoint(anchor, f));
      d.orientation_left = quat_at(f + 3);
      d.right.push_back(detail::read_keypoint(anchor, f + 7));
      d.orientation_right = quat_at(f + 10);
      break;
    case Variant::AFEuler6D:
      d.left.push_back(detail::read_keypoint(anchor, f));
      d.euler_left = euler_at(f + 3);
      d.orientation_left = d.euler_left->to_quaternion();
      d.right.push_back(detail::read_keypoint(anchor, f + 6));
      d.euler_right = euler_at(f + 9);
      d.orientation_right = d.euler_right->to_quaternion();
      break;
    case Variant::AFBinned:
    case Variant::AF3DBinned:
    case Variant::AxisBinned:
      break;
    case Variant::MultiPoint: {
      const std::size_t K = schema.keypoints.size();
      for (std::size_t i = 0; i < K; ++i) d.left.push_back(detail::read_keypoint(anchor, f + 3 * i));
      for (std::size_t i = 0; i < K; ++i) {
        d.right.push_back(detail::read_keypoint(anchor, f + 3 * (K + i)));
      }
      break;
    }
  }
  if (schema.has_bins()) {
    const std::size_t off = schema.regression_count();
    if (off == 3) d.left.push_back(detail::read_keypoint(anchor, f));
    const auto first = fields.begin() + static_cast<std::ptrdiff_t>(off);
    const int arg = static_cast<int>(std::max_element(first, fields.end()) - first);
    d.bin = arg;
    d.bin_center = bin_center(arg, schema.bin_scheme());
    if (schema.variant != Variant::AxisBinned) d.orientation_left = d.bin_center->to_quaternion();
  }
  return d;
}

// ---------------------------------------------------------------------------
// Orientation from keypoints
// ---------------------------------------------------------------------------

// Rotation R minimizing sum |(p_i - p_mean) - R (c_i - c_mean)|^2 (orthogonal
// Procrustes with reflection correction).
inline Quaternion orientation_from_keypoints(const std::vector<Vec3>& predicted,
                                             const std::vector<Vec3>& canonical) {
  if (predicted.size() != canonical.size()) throw Error("keypoint count mismatch");
  if (canonical.size() < 3) throw Error("degenerate keypoint configuration");
  Vec3 pm = Vec3::Zero(), cm = Vec3::Zero();
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    pm += predicted[i];
    cm += canonical[i];
  }
  pm /= static_cast<double>(canonical.size());
  cm /= static_cast<double>(canonical.size());

  Eigen::Matrix3Xd C(3, canonical.size());
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    C.col(static_cast<Eigen::Index>(i)) = canonical[i] - cm;
    H += (canonical[i] - cm) * (predicted[i] - pm).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> spread(C);
  const Vec3 sv = spread.singularValues();
  if (!(sv(0) > 0.0) || sv(1) < 1e-9 * sv(0)) throw Error("degenerate keypoint configuration");

  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Quaternion::from_matrix(V * D * U.transpose());
}

// ---------------------------------------------------------------------------
// Targets and loss
// ---------------------------------------------------------------------------

struct AnchorRow {
  std::array<double, 4> box{0.0, 0.0, 0.0, 0.0};
  std::vector<double> fields;
  double cls{0.0};  // right-hand probability (target: 1 matched, 0 background)
  bool matched{false};
};

// Per-anchor head tensor. Used both for targets and for network outputs.
struct EncodedTarget {
  std::size_t k{0};
  std::vector<AnchorRow> rows;

  std::size_t matched_count() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const AnchorRow& r) { return r.matched; }));
  }
};

struct GroundTruth {
  Box2D box;
  FieldSource source;
};

// Encodes one groundtruth field vector on a specific anchor; the anchor must
// be matched.
inline std::vector<double> encode_fields(const FieldSchema& schema,
                                         const std::vector<AnchorBox>& anchors,
                                         const Assignment& assignment, std::size_t anchor_index,
                                         const FieldSource& src) {
  if (!assignment.matched(anchor_index)) throw Error("encode on unmatched anchor");
  return encode_fields(schema, anchors.at(anchor_index), src);
}

inline EncodedTarget encode_target(const FieldSchema& schema, const std::vector<AnchorBox>& anchors,
                                   const std::vector<GroundTruth>& gts) {
  std::vector<Box2D> boxes;
  for (const auto& g : gts) boxes.push_back(g.box);
  const Assignment a = match_anchors(boxes, anchors);
  EncodedTarget t;
  t.k = schema.k();
  t.rows.resize(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    AnchorRow& r = t.rows[i];
    if (!a.matched(i)) {
      r.fields.assign(t.k, 0.0);
      continue;
    }
    const GroundTruth& g = gts[static_cast<std::size_t>(a.gt_index[i])];
    r.box = encode_box(anchors[i], g.box);
    r.fields = encode_fields(schema, anchors, a, i, g.source);
    r.cls = 1.0;
    r.matched = true;
  }
  return t;
}

inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

// Binary cross-entropy of probability p against target y; exact zero when
// p == y in {0, 1}.
inline double binary_cross_entropy(double p, double y) {
  constexpr double kTiny = 1e-12;
  double l = 0.0;
  if (y > 0.0) l -= y * std::log(std::max(p, kTiny));
  if (y < 1.0) l -= (1.0 - y) * std::log(std::max(1.0 - p, kTiny));
  return l;
}

struct LossBreakdown {
  double total{0.0};
  double loc{0.0};     // (1/n) sum SmoothL1 box offsets over matched anchors
  double conf{0.0};    // (alpha/n) sum BCE over all anchors
  double fields{0.0};  // (beta/n) sum field loss over matched anchors
};

// total = (1/n)[L_loc + alpha L_conf + beta L_fields], n = matched anchors.
// Regression fields use SmoothL1, bin fields categorical cross-entropy on
// predicted probabilities. With n = 0 only alpha * L_conf is returned.
inline LossBreakdown multibox_loss(const EncodedTarget& pred, const EncodedTarget& target,
                                   const FieldSchema& schema, double alpha = 1.0,
                                   double beta = 1.0) {
  if (pred.rows.size() != target.rows.size()) throw Error("prediction/target anchor count mismatch");
  const std::size_t k = schema.k();
  const std::size_t nreg = schema.regression_count();
  double loc = 0.0, conf = 0.0, fields = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < target.rows.size(); ++i) {
    const AnchorRow& p = pred.rows[i];
    const AnchorRow& t = target.rows[i];
    if (p.fields.size() != k || t.fields.size() != k) throw Error("field shape mismatch");
    conf += binary_cross_entropy(p.cls, t.cls);
    if (!t.matched) continue;
    ++n;
    for (std::size_t j = 0; j < 4; ++j) loc += smooth_l1(p.box[j] - t.box[j]);
    for (std::size_t j = 0; j < nreg; ++j) fields += smooth_l1(p.fields[j] - t.fields[j]);
    for (std::size_t j = nreg; j < k; ++j) {
      if (t.fields[j] > 0.0) fields -= t.fields[j] * std::log(std::max(p.fields[j], 1e-12));
    }
  }
  LossBreakdown out;
  if (n == 0) {
    out.conf = alpha * conf;
    out.total = out.conf;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loc = loc * inv;
  out.conf = alpha * conf * inv;
  out.fields = beta * fields * inv;
  out.total = out.loc + out.conf + out.fields;
  return out;
}

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

struct Detection {
  Box2D box;
  std::vector<double> fields;  // raw head fields, decode with decode_fields
  double class_score{0.0};
  std::size_t anchor{0};
};

// Every anchor whose class score reaches `min_score`, with its box decoded.
inline std::vector<Detection> decode_detections(const EncodedTarget& output,
                                                const std::vector<AnchorBox>& anchors,
                                                double min_score = 0.0) {
  if (output.rows.size() != anchors.size()) throw Error("output/anchor count mismatch");
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const AnchorRow& r = output.rows[i];
    if (r.cls < min_score) continue;
    dets.push_back({decode_box(anchors[i], r.box), r.fields, std::clamp(r.cls, 0.0, 1.0), i});
  }
  return dets;
}

// Greedy non-maximum suppression by descending score (stable for ties).
inline std::vector<Detection> nms_select(std::vector<Detection> dets, double iou_thresh = 0.5,
                                         std::size_t top_k = 1) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.class_score > b.class_score; });
  std::vector<Detection> kept;
  for (auto& d : dets) {
    if (kept.size() >= top_k) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.box, d.box) > iou_thresh;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

}  // namespace hmdtrack
