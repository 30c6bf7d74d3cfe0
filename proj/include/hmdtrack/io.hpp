#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmdtrack/calibration.hpp"
#include "hmdtrack/camera.hpp"
#include "hmdtrack/error.hpp"
#include "hmdtrack/geometry.hpp"
#include "hmdtrack/labelgen.hpp"
#include "hmdtrack/metrics.hpp"
#include "hmdtrack/pipeline.hpp"
#include "hmdtrack/simulator.hpp"
#include "hmdtrack/ssdaf.hpp"

// File formats shared by the CLI and the tests. Key names are fixed; outputs
// use insertion-ordered objects so files are byte-stable across runs.
namespace hmdtrack::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Calls fn(line_json, line_number) for every non-empty line; parse and schema
// errors are re-thrown with the file and line.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), lineno);
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json quat_json(const Quaternion& q) { return json::array({q.w, q.x, q.y, q.z}); }

inline Quaternion quat_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("expected a [w,x,y,z] quaternion");
  const Quaternion q{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!(q.norm() > 0.0)) throw Error("zero quaternion");
  return q.normalized();
}

inline json pose_json(const Pose& p) {
  return {{"quaternion", quat_json(p.rotation)}, {"translation_m", vec_json(p.translation)}};
}

inline Pose pose_from(const json& j) {
  return {quat_from(j.at("quaternion")), vec3_from(j.at("translation_m"))};
}

// ---------------------------------------------------------------------------
// Camera rig
// ---------------------------------------------------------------------------

inline json camera_json(const FisheyeCamera& c) {
  return {{"fx", c.fx},           {"fy", c.fy},         {"cx", c.cx},
          {"cy", c.cy},           {"width", c.width},   {"height", c.height},
          {"max_theta", c.max_theta}, {"distortion", c.distortion}};
}

inline FisheyeCamera camera_from(const json& j) {
  FisheyeCamera c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.max_theta = j.at("max_theta").get<double>();
  if (j.contains("distortion")) c.distortion = j.at("distortion").get<std::vector<double>>();
  c.validate();
  return c;
}

inline json rig_json(const StereoRig& r) {
  return {{"left", camera_json(r.left)},
          {"right", camera_json(r.right)},
          {"t_left_right", pose_json(r.T_left_right)}};
}

inline StereoRig rig_from(const json& j) {
  try {
    StereoRig r{camera_from(j.at("left")), camera_from(j.at("right")), pose_from(j.at("t_left_right"))};
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("rig: ") + e.what());
  }
}

inline StereoRig read_rig(const std::string& path) { return rig_from(read_json(path)); }

// ---------------------------------------------------------------------------
// Trajectories: {"t": s, "q": [w,x,y,z], "p_m": [x,y,z]} per line. Optional
// keys: "valid" (written only when false) and "body" to multiplex streams.
// ---------------------------------------------------------------------------

inline json trajectory_line(const TimedPose& s, const std::string& body = {}) {
  json j;
  if (!body.empty()) j["body"] = body;
  j["t"] = s.t;
  j["q"] = quat_json(s.pose.rotation);
  j["p_m"] = vec_json(s.pose.translation);
  if (!s.valid) j["valid"] = false;
  return j;
}

inline std::string trajectory_jsonl(const TimedTrajectory& tr, const std::string& body = {}) {
  std::string out;
  for (const auto& s : tr.samples) out += trajectory_line(s, body).dump() + "\n";
  return out;
}

// Reads the lines whose "body" equals `body` (all lines when `body` is empty
// or the line has no "body" key).
inline TimedTrajectory read_trajectory(const std::string& path, const std::string& body = {},
                                       double rate_hz = 0.0) {
  TimedTrajectory tr;
  tr.rate_hz = rate_hz;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    if (!body.empty() && j.contains("body") && j.at("body").get<std::string>() != body) return;
    TimedPose s;
    s.t = j.at("t").get<double>();
    s.pose = {quat_from(j.at("q")), vec3_from(j.at("p_m"))};
    s.valid = j.value("valid", true);
    if (!tr.samples.empty() && !(s.t > tr.samples.back().t)) {
      throw Error("timestamps not strictly increasing");
    }
    tr.samples.push_back(s);
  });
  if (tr.samples.empty()) throw Error(path + ": no trajectory samples" + (body.empty() ? "" : " for body " + body));
  return tr;
}

// ---------------------------------------------------------------------------
// Tip-calibration samples: {"cb": pose, "ct": pose} per line
// ---------------------------------------------------------------------------

inline std::string tip_samples_jsonl(const std::vector<TipSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    json j;
    j["cb"] = pose_json(s.T_V_CB);
    j["ct"] = pose_json(s.T_V_CT);
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<TipSample> read_tip_samples(const std::string& path) {
  std::vector<TipSample> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back({pose_from(j.at("cb")), pose_from(j.at("ct"))});
  });
  return out;
}

// ---------------------------------------------------------------------------
// Labels: t, frame_id, box_l, box_r, kp_l, kp_r, q, label (+ score,
// bin_scores for predictions)
// ---------------------------------------------------------------------------

inline json box_json(const Box2D& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

inline Box2D box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("expected [cx,cy,w,h] box");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json kp_json(const Keypoint& k) { return json::array({k.u, k.v, k.z}); }

inline Keypoint kp_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected [u,v,z] keypoint");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline std::string label_name(ClassLabel l) {
  return l == ClassLabel::right_hand ? "right_hand" : "background";
}

inline ClassLabel label_from(const std::string& s) {
  if (s == "right_hand") return ClassLabel::right_hand;
  if (s == "background") return ClassLabel::background;
  throw Error("unknown label '" + s + "'");
}

inline json label_json(const LabelRow& r) {
  json j;
  j["t"] = r.t;
  j["frame_id"] = r.frame_id;
  j["box_l"] = box_json(r.box_l);
  j["box_r"] = box_json(r.box_r);
  j["kp_l"] = kp_json(r.kp_l);
  j["kp_r"] = kp_json(r.kp_r);
  j["q"] = quat_json(r.q);
  j["label"] = label_name(r.label);
  if (r.score) j["score"] = *r.score;
  if (!r.bin_scores.empty()) j["bin_scores"] = r.bin_scores;
  return j;
}

inline LabelRow label_from_json(const json& j) {
  LabelRow r;
  r.t = j.at("t").get<double>();
  r.frame_id = j.at("frame_id").get<std::int64_t>();
  r.box_l = box_from(j.at("box_l"));
  r.box_r = box_from(j.at("box_r"));
  r.kp_l = kp_from(j.at("kp_l"));
  r.kp_r = kp_from(j.at("kp_r"));
  r.q = quat_from(j.at("q"));
  r.label = label_from(j.at("label").get<std::string>());
  if (j.contains("score")) r.score = j.at("score").get<double>();
  if (j.contains("bin_scores")) r.bin_scores = j.at("bin_scores").get<std::vector<double>>();
  return r;
}

inline std::string labels_jsonl(const std::vector<LabelRow>& rows) {
  std::string out;
  for (const auto& r : rows) out += label_json(r).dump() + "\n";
  return out;
}

inline std::vector<LabelRow> read_labels(const std::string& path) {
  std::vector<LabelRow> rows;
  for_each_jsonl(path, [&](const json& j, std::size_t) { rows.push_back(label_from_json(j)); });
  return rows;
}

// ---------------------------------------------------------------------------
// Schema + anchors:
// {"variant": "...", "bins": b, "axis": "yaw", "keypoints": [[x,y,z],...],
//  "layers": [{"grid": [w,h], "scale": s, "aspects": [...]}, ...]}
// ---------------------------------------------------------------------------

struct SchemaConfig {
  FieldSchema schema;
  AnchorConfig anchors{AnchorConfig::defaults()};
};

inline json schema_json(const SchemaConfig& c) {
  json j;
  j["variant"] = std::string(to_string(c.schema.variant));
  if (c.schema.has_bins()) j["bins"] = c.schema.bins;
  if (c.schema.variant == Variant::AxisBinned) j["axis"] = std::string(to_string(c.schema.axis));
  if (c.schema.variant == Variant::MultiPoint) {
    json kps = json::array();
    for (const auto& k : c.schema.keypoints) kps.push_back(vec_json(k));
    j["keypoints"] = kps;
  }
  json layers = json::array();
  for (const auto& l : c.anchors.layers) {
    layers.push_back({{"grid", json::array({l.grid_w, l.grid_h})}, {"scale", l.scale}, {"aspects", l.aspects}});
  }
  j["layers"] = layers;
  return j;
}

inline SchemaConfig schema_from(const json& j) {
  try {
    SchemaConfig c;
    c.schema = FieldSchema::of(variant_from_string(j.at("variant").get<std::string>()));
    c.schema.bins = j.value("bins", 0);
    if (j.contains("axis")) c.schema.axis = axis_from_string(j.at("axis").get<std::string>());
    if (j.contains("keypoints")) {
      c.schema.keypoints.clear();
      for (const auto& k : j.at("keypoints")) c.schema.keypoints.push_back(vec3_from(k));
    }
    if (j.contains("layers")) {
      c.anchors.layers.clear();
      for (const auto& l : j.at("layers")) {
        AnchorLayer L;
        const auto grid = l.at("grid").get<std::vector<int>>();
        if (grid.size() != 2) throw Error("layer grid must be [w,h]");
        L.grid_w = grid[0];
        L.grid_h = grid[1];
        L.scale = l.at("scale").get<double>();
        L.aspects = l.value("aspects", std::vector<double>{1.0});
        c.anchors.layers.push_back(L);
      }
    }
    c.schema.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("schema: ") + e.what());
  }
}

inline SchemaConfig read_schema(const std::string& path) { return schema_from(read_json(path)); }

// ---------------------------------------------------------------------------
// Calibration report. Angles are reported in degrees.
// ---------------------------------------------------------------------------

inline json calibration_json(const CalibrationReport& r) {
  json j;
  j["hand_eye"] = {{"X", pose_json(r.hand_eye.X)},
                   {"rotation_rmse_deg", rad2deg(r.hand_eye.rotation_rmse)},
                   {"translation_rmse_m", r.hand_eye.translation_rmse},
                   {"n_pairs", r.hand_eye.n_pairs}};
  j["time_alignment"] = {{"offset_s", r.alignment.offset},
                         {"correlation_peak", r.alignment.correlation_peak},
                         {"association_offset_s", r.association_offset}};
  if (r.tip_offset) {
    j["tip_offset"] = {{"T_CB_CT", pose_json(*r.tip_offset)}, {"n_samples", r.n_tip_samples}};
  }
  return j;
}

inline CalibrationReport calibration_from(const json& j) {
  try {
    CalibrationReport r;
    const json& he = j.at("hand_eye");
    r.hand_eye.X = pose_from(he.at("X"));
    r.hand_eye.rotation_rmse = deg2rad(he.value("rotation_rmse_deg", 0.0));
    r.hand_eye.translation_rmse = he.value("translation_rmse_m", 0.0);
    r.hand_eye.n_pairs = he.value("n_pairs", std::size_t{0});
    const json& ta = j.at("time_alignment");
    r.alignment.offset = ta.at("offset_s").get<double>();
    r.alignment.correlation_peak = ta.value("correlation_peak", 0.0);
    r.association_offset = ta.value("association_offset_s", r.alignment.offset);
    if (j.contains("tip_offset")) {
      r.tip_offset = pose_from(j.at("tip_offset").at("T_CB_CT"));
      r.n_tip_samples = j.at("tip_offset").value("n_samples", std::size_t{0});
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("calibration: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Simulation config. Rotation noise in degrees, translation in meters.
// ---------------------------------------------------------------------------

inline json sim_config_json(const SimConfig& c, const OraclePredictor& o) {
  json j;
  j["seed"] = c.seed;
  j["duration_s"] = c.duration;
  j["mocap_rate_hz"] = c.mocap_rate;
  j["camera_rate_hz"] = c.camera_rate;
  j["noise"] = {{"rot_headset_deg", rad2deg(c.noise.rot_headset)},
                {"trans_headset_m", c.noise.trans_headset},
                {"rot_ctrl_deg", rad2deg(c.noise.rot_ctrl)},
                {"trans_ctrl_m", c.noise.trans_ctrl}};
  j["dropout"] = {{"rate_per_s", c.dropout.rate_per_second},
                  {"mean_gap_frames", c.dropout.mean_gap_frames}};
  j["clock_offset_s"] = c.clock_offset;
  j["oracle"] = {{"pixel_noise_px", o.pixel_noise_sigma},
                 {"depth_noise_m", o.depth_noise_sigma},
                 {"orientation_noise_deg", rad2deg(o.orientation_noise_sigma)},
                 {"box_noise_px", o.box_noise_sigma},
                 {"noisy_score", o.noisy_score}};
  return j;
}

struct SimFileConfig {
  SimConfig sim;
  OraclePredictor oracle;
};

inline SimFileConfig sim_config_from(const json& j) {
  try {
    SimFileConfig c;
    c.sim.seed = j.value("seed", std::uint64_t{0});
    c.sim.duration = j.value("duration_s", c.sim.duration);
    c.sim.mocap_rate = j.value("mocap_rate_hz", c.sim.mocap_rate);
    c.sim.camera_rate = j.value("camera_rate_hz", c.sim.camera_rate);
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      c.sim.noise.rot_headset = deg2rad(n.value("rot_headset_deg", rad2deg(c.sim.noise.rot_headset)));
      c.sim.noise.trans_headset = n.value("trans_headset_m", c.sim.noise.trans_headset);
      c.sim.noise.rot_ctrl = deg2rad(n.value("rot_ctrl_deg", rad2deg(c.sim.noise.rot_ctrl)));
      c.sim.noise.trans_ctrl = n.value("trans_ctrl_m", c.sim.noise.trans_ctrl);
    }
    if (j.contains("dropout")) {
      c.sim.dropout.rate_per_second = j.at("dropout").value("rate_per_s", 0.0);
      c.sim.dropout.mean_gap_frames = j.at("dropout").value("mean_gap_frames", c.sim.dropout.mean_gap_frames);
    }
    c.sim.clock_offset = j.value("clock_offset_s", 0.0);
    if (j.contains("oracle")) {
      const json& o = j.at("oracle");
      c.oracle.pixel_noise_sigma = o.value("pixel_noise_px", 0.0);
      c.oracle.depth_noise_sigma = o.value("depth_noise_m", 0.0);
      c.oracle.orientation_noise_sigma = deg2rad(o.value("orientation_noise_deg", 0.0));
      c.oracle.box_noise_sigma = o.value("box_noise_px", 0.0);
      c.oracle.noisy_score = o.value("noisy_score", false);
    }
    c.sim.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metrics report. Orientation errors in both radians and degrees.
// ---------------------------------------------------------------------------

inline std::string threshold_key(double t) {
  std::ostringstream ss;
  ss << t;
  return ss.str();
}

inline json error_json(const ErrorStats& e) { return {{"mae", e.mae}, {"rmse", e.rmse}}; }

inline json metrics_json(const MetricsReport& r) {
  json j;
  json m = json::object();
  for (const auto& [t, p] : r.map_at) m[threshold_key(t)] = p;
  j["map_at"] = m;
  if (!r.sweep.empty()) {
    json s = json::object();
    for (const auto& [t, p] : r.sweep) s[threshold_key(t)] = p;
    j["precision_sweep_tc"] = s;
  }
  j["counts"] = {{"TP", r.count(DetectionOutcome::TP)},
                 {"FP", r.count(DetectionOutcome::FP)},
                 {"TN", r.count(DetectionOutcome::TN)},
                 {"FN", r.count(DetectionOutcome::FN)}};
  if (r.uv) j["uv_px"] = error_json(*r.uv);
  if (r.xyz) j["xyz_m"] = error_json(*r.xyz);
  if (r.orient) {
    const auto& o = *r.orient;
    j["orient_rad"] = {{"yaw", error_json(o[0])}, {"pitch", error_json(o[1])}, {"roll", error_json(o[2])}};
    auto deg = [](const ErrorStats& e) { return error_json({rad2deg(e.mae), rad2deg(e.rmse)}); };
    j["orient_deg"] = {{"yaw", deg(o[0])}, {"pitch", deg(o[1])}, {"roll", deg(o[2])}};
  }
  if (r.bin_map) j["bin_map"] = *r.bin_map;
  return j;
}

inline std::string outcome_name(DetectionOutcome o) {
  switch (o) {
    case DetectionOutcome::TP: return "TP";
    case DetectionOutcome::FP: return "FP";
    case DetectionOutcome::TN: return "TN";
    case DetectionOutcome::FN: return "FN";
  }
  return "";
}

inline std::string per_frame_csv(const MetricsReport& r) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "frame_id,outcome,uv_error_px,xyz_error_m,yaw_error_deg,pitch_error_deg,roll_error_deg\n";
  for (const auto& f : r.frames) {
    ss << f.frame_id << ',' << outcome_name(f.outcome) << ',';
    if (f.uv_error) ss << *f.uv_error;
    ss << ',';
    if (f.xyz_error) ss << *f.xyz_error;
    for (int k = 0; k < 3; ++k) {
      ss << ',';
      if (f.orient_error) ss << rad2deg((*f.orient_error)[static_cast<std::size_t>(k)]);
    }
    ss << '\n';
  }
  return ss.str();
}

// ---------------------------------------------------------------------------
// Encoded targets: little-endian float32 rows, one per anchor, samples
// concatenated. Row = [box(4), fields(k), class(1), matched(1)].
// ---------------------------------------------------------------------------

inline void append_f32_le(std::string& out, double v) {
  const auto f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

inline std::string targets_binary(const std::vector<EncodedTarget>& targets) {
  std::string out;
  for (const auto& t : targets) {
    for (const auto& r : t.rows) {
      for (double b : r.box) append_f32_le(out, b);
      for (double f : r.fields) append_f32_le(out, f);
      append_f32_le(out, r.cls);
      append_f32_le(out, r.matched ? 1.0 : 0.0);
    }
  }
  return out;
}

inline float read_f32_le(const std::string& data, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + static_cast<std::size_t>(i)])) << (8 * i);
  }
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

inline json targets_sidecar(const SchemaConfig& c, std::size_t n_samples, std::size_t n_anchors,
                            const std::vector<std::int64_t>& frame_ids, const std::string& data_file) {
  const std::size_t k = c.schema.k();
  json cols = json::array();
  cols.push_back({{"name", "box"}, {"offset", 0}, {"count", 4}});
  cols.push_back({{"name", "fields"}, {"offset", 4}, {"count", k}});
  cols.push_back({{"name", "class"}, {"offset", 4 + k}, {"count", 1}});
  cols.push_back({{"name", "matched"}, {"offset", 5 + k}, {"count", 1}});
  json j;
  j["data"] = data_file;
  j["dtype"] = "float32";
  j["endianness"] = "little";
  j["n_samples"] = n_samples;
  j["n_anchors"] = n_anchors;
  j["row_width"] = 6 + k;
  j["columns"] = cols;
  j["schema"] = schema_json(c);
  j["frame_ids"] = frame_ids;
  return j;
}

}  // namespace hmdtrack::io
