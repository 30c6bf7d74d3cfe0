// hmdtrack: dataset pipeline command line.
//
// Exit codes: 0 success, 1 validation failure, 2 I/O error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hmdtrack/io.hpp"
#include "hmdtrack/pipeline.hpp"
#include "hmdtrack/simulator.hpp"
#include "hmdtrack/stats.hpp"

namespace fs = std::filesystem;
using namespace hmdtrack;
using io::json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string schema;
  std::string rig;
  std::string format{"json"};
};

void require_inputs(const std::vector<std::string>& paths) {
  for (const auto& p : paths) {
    if (!p.empty() && !fs::is_regular_file(p)) throw IoError("input file not found: " + p);
  }
}

fs::path out_dir(const Common& c) {
  if (c.out.empty()) throw Error("--out is required");
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create output directory '" + c.out + "': " + ec.message());
  return fs::path(c.out);
}

StereoRig load_rig(const Common& c) { return c.rig.empty() ? default_rig() : io::read_rig(c.rig); }

io::SchemaConfig load_schema(const Common& c) {
  if (c.schema.empty()) throw Error("--schema is required");
  return io::read_schema(c.schema);
}

// Writes `j` to <out>/<name> when --out is set, otherwise to stdout.
void emit(const Common& c, const std::string& name, const json& j) {
  if (c.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    io::write_json((out_dir(c) / name).string(), j);
  }
}

// ---------------------------------------------------------------------------

int run_simulate(const Common& c) {
  require_inputs({c.config, c.rig});
  io::SimFileConfig cfg = c.config.empty() ? io::SimFileConfig{} : io::sim_config_from(io::read_json(c.config));
  if (c.seed) cfg.sim.seed = *c.seed;
  cfg.oracle.seed = cfg.sim.seed;
  const StereoRig rig = load_rig(c);
  const fs::path dir = out_dir(c);

  const SimSession s = simulate_session(cfg.sim, rig);
  io::write_text((dir / "mocap.jsonl").string(), io::trajectory_jsonl(s.mocap_headset, "H") +
                                                     io::trajectory_jsonl(s.mocap_controller_back, "CB"));
  io::write_text((dir / "camera.jsonl").string(), io::trajectory_jsonl(s.camera));
  io::write_text((dir / "tip_calib.jsonl").string(), io::tip_samples_jsonl(s.tip_samples));
  io::write_json((dir / "rig.json").string(), io::rig_json(rig));

  const LabelResult labels = label_records(s.records, rig);
  std::vector<LabelRow> rows;
  for (const auto& smp : labels.samples) rows.push_back(to_label_row(smp));
  io::write_text((dir / "labels_gt.jsonl").string(), io::labels_jsonl(rows));
  io::write_text((dir / "predictions.jsonl").string(), io::labels_jsonl(oracle_predict(rows, cfg.oracle)));

  json m;
  m["seed"] = cfg.sim.seed;
  m["config"] = io::sim_config_json(cfg.sim, cfg.oracle);
  m["files"] = {"mocap.jsonl", "camera.jsonl", "tip_calib.jsonl", "rig.json", "labels_gt.jsonl",
                "predictions.jsonl"};
  m["counts"] = {{"mocap_samples", s.mocap_headset.size()},
                 {"camera_frames", s.camera.size()},
                 {"labels", rows.size()},
                 {"dropped_missing", labels.report.dropped_missing},
                 {"dropped_reinit", labels.report.dropped_reinit},
                 {"dropped_range", labels.report.dropped_range},
                 {"dropped_invisible", labels.dropped_invisible}};
  io::write_json((dir / "manifest.json").string(), m);
  std::cout << "simulated " << s.camera.size() << " frames, " << rows.size() << " labels -> " << dir.string()
            << "\n";
  return 0;
}

struct CalibrateArgs {
  std::string traj, frames, tip;
  double window{1.0};
};

int run_calibrate(const Common& c, const CalibrateArgs& a) {
  require_inputs({a.traj, a.frames, a.tip});
  const TimedTrajectory head = io::read_trajectory(a.traj, "H");
  const TimedTrajectory cam = io::read_trajectory(a.frames);
  const std::vector<TipSample> tips = a.tip.empty() ? std::vector<TipSample>{} : io::read_tip_samples(a.tip);
  CalibrationOptions opt;
  opt.search_window = a.window;
  emit(c, "calib.json", io::calibration_json(calibrate_session(head, cam, tips, opt)));
  return 0;
}

struct LabelgenArgs {
  std::string traj, frames, calib;
  bool flip{false};
};

int run_labelgen(const Common& c, const LabelgenArgs& a) {
  std::string frames = a.frames;
  if (frames.empty()) frames = (fs::path(a.traj).parent_path() / "camera.jsonl").string();
  require_inputs({a.traj, frames, a.calib, c.rig});
  const CalibrationReport cal = io::calibration_from(io::read_json(a.calib));
  if (!cal.tip_offset) throw Error("calibration lacks a tip offset");
  const StereoRig rig = load_rig(c);
  const auto records = synchronize_records(io::read_trajectory(a.traj, "H"), io::read_trajectory(a.traj, "CB"),
                                           io::read_trajectory(frames), cal.hand_eye.X, *cal.tip_offset,
                                           cal.association_offset);
  const LabelResult res = label_records(records, rig);
  std::vector<LabelRow> rows;
  for (const auto& s : res.samples) rows.push_back(to_label_row(a.flip ? flip_vertical(s, rig) : s));
  const fs::path dir = out_dir(c);
  io::write_text((dir / "labels.jsonl").string(), io::labels_jsonl(rows));
  json rep = {{"frames", records.size()},
              {"kept", rows.size()},
              {"dropped_missing", res.report.dropped_missing},
              {"dropped_reinit", res.report.dropped_reinit},
              {"dropped_range", res.report.dropped_range},
              {"dropped_invisible", res.dropped_invisible}};
  io::write_json((dir / "clean_report.json").string(), rep);
  std::cout << rep.dump() << "\n";
  return 0;
}

GroundTruth row_ground_truth(const LabelRow& r, const StereoRig& rig, const FieldSchema& schema) {
  return ground_truth(from_label_row(r, rig), rig, schema);
}

struct EncodeArgs {
  std::string labels;
};

int run_encode(const Common& c, const EncodeArgs& a) {
  require_inputs({a.labels, c.schema, c.rig});
  const auto sc = load_schema(c);
  const StereoRig rig = load_rig(c);
  const auto rows = io::read_labels(a.labels);
  const auto anchors = generate_anchors(sc.anchors);
  std::vector<EncodedTarget> targets;
  std::vector<std::int64_t> ids;
  std::vector<LabelRow> decoded;
  for (const auto& r : rows) {
    std::vector<GroundTruth> gts;
    if (r.label == ClassLabel::right_hand) gts.push_back(row_ground_truth(r, rig, sc.schema));
    targets.push_back(encode_target(sc.schema, anchors, gts));
    ids.push_back(r.frame_id);
    // The target doubles as a perfect head output for the decode check.
    if (auto p = predict_from_output(targets.back(), anchors, sc.schema, rig, r.t, r.frame_id)) {
      decoded.push_back(*p);
    }
  }
  const fs::path dir = out_dir(c);
  io::write_text((dir / "targets.bin").string(), io::targets_binary(targets));
  io::write_json((dir / "targets.json").string(),
                 io::targets_sidecar(sc, targets.size(), anchors.size(), ids, "targets.bin"));
  io::write_text((dir / "decoded.jsonl").string(), io::labels_jsonl(decoded));
  std::cout << "encoded " << targets.size() << " samples x " << anchors.size() << " anchors, k=" << sc.schema.k()
            << "\n";
  return 0;
}

constexpr double kRoundtripTolerance = 1e-9;

int run_roundtrip(const Common& c, const EncodeArgs& a) {
  require_inputs({a.labels, c.schema, c.rig});
  const auto sc = load_schema(c);
  const StereoRig rig = load_rig(c);
  const auto anchors = generate_anchors(sc.anchors);
  RoundtripStats total;
  std::size_t samples = 0;
  std::size_t line = 0;
  for (const auto& r : io::read_labels(a.labels)) {
    ++line;
    if (r.label != ClassLabel::right_hand) continue;
    RoundtripStats st;
    try {
      st = roundtrip_fields(sc.schema, anchors, row_ground_truth(r, rig, sc.schema));
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      throw Error(a.labels + ":" + std::to_string(line) + ": " + e.what());
    }
    total.max_abs_error = std::max(total.max_abs_error, st.max_abs_error);
    total.max_quant_error = std::max(total.max_quant_error, st.max_quant_error);
    total.half_bin_width = st.half_bin_width;
    total.anchors_checked += st.anchors_checked;
    ++samples;
  }
  const bool bins = sc.schema.has_bins();
  const bool ok = total.max_abs_error <= kRoundtripTolerance &&
                  (!bins || total.max_quant_error <= total.half_bin_width);
  json j;
  j["variant"] = std::string(to_string(sc.schema.variant));
  j["samples"] = samples;
  j["anchors_checked"] = total.anchors_checked;
  j["max_abs_error"] = total.max_abs_error;
  if (bins) {
    j["max_quant_error_deg"] = rad2deg(total.max_quant_error);
    j["half_bin_width_deg"] = rad2deg(total.half_bin_width);
  }
  j["pass"] = ok;
  emit(c, "roundtrip.json", j);
  if (!ok) std::cerr << "roundtrip error exceeds tolerance\n";
  return ok ? 0 : 1;
}

struct EvaluateArgs {
  std::string labels, pred;
  std::vector<double> sweep;
};

int run_evaluate(const Common& c, const EvaluateArgs& a) {
  require_inputs({a.labels, a.pred, c.schema, c.rig});
  const StereoRig rig = load_rig(c);
  EvalInputs in;
  in.has_orientation = true;
  if (!c.schema.empty()) {
    const FieldSchema s = load_schema(c).schema;
    in.has_depth = s.variant != Variant::AF2D && s.variant != Variant::AFBinned;
    in.has_orientation = s.variant == Variant::AFQuat6D || s.variant == Variant::AFEuler6D ||
                         s.variant == Variant::MultiPoint;
    if (s.has_bins()) in.bins = s.bin_scheme();
  }
  EvalOptions opt;
  opt.sweep_scores = a.sweep;
  const MetricsReport rep =
      evaluate(build_eval_frames(io::read_labels(a.labels), io::read_labels(a.pred), rig, in), opt);
  if (c.format == "json") {
    emit(c, "metrics.json", io::metrics_json(rep));
  } else if (c.format == "csv") {
    if (c.out.empty()) {
      std::cout << io::per_frame_csv(rep);
    } else {
      const fs::path dir = out_dir(c);
      io::write_json((dir / "metrics.json").string(), io::metrics_json(rep));
      io::write_text((dir / "per_frame.csv").string(), io::per_frame_csv(rep));
    }
  } else {
    throw Error("evaluate supports --format json or csv");
  }
  return 0;
}

struct StatsArgs {
  std::string labels;
  std::size_t bins{20};
};

int run_stats(const Common& c, const StatsArgs& a) {
  require_inputs({a.labels, c.rig});
  const DatasetStats st = dataset_stats(io::read_labels(a.labels), load_rig(c), a.bins);
  const fs::path dir = out_dir(c);
  if (c.format == "json") {
    json j;
    j["occupancy"] = {{"cols", st.occupancy.cols}, {"rows", st.occupancy.rows}, {"counts", st.occupancy.counts}};
    for (const auto& h : st.histograms) j[h.name] = {{"unit", h.unit}, {"edges", h.edges}, {"counts", h.counts}};
    io::write_json((dir / "stats.json").string(), j);
  } else {
    // SVG renderings are written next to their CSV sources.
    const bool svg = c.format == "svg";
    if (!svg && c.format != "csv") throw Error("unknown --format '" + c.format + "'");
    io::write_text((dir / "occupancy.csv").string(), occupancy_csv(st.occupancy));
    if (svg) io::write_text((dir / "occupancy.svg").string(), occupancy_svg(st.occupancy));
    for (const auto& h : st.histograms) {
      io::write_text((dir / ("hist_" + h.name + ".csv")).string(), histogram_csv(h));
      if (svg) io::write_text((dir / ("hist_" + h.name + ".svg")).string(), histogram_svg(h));
    }
  }
  std::cout << "stats over " << st.histograms.front().total() << " labels -> " << dir.string() << "\n";
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool config = false) {
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--rig", c.rig, "Stereo rig JSON (default rig when omitted)");
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "svg", "json"}));
  if (config) {
    sub->add_option("--seed", c.seed, "Random seed (overrides the config)");
    sub->add_option("--config", c.config, "Simulation config JSON");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HMD controller tracking dataset pipeline"};
  app.require_subcommand(1);
  Common c;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic capture session");
  add_common(sim, c, true);

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "Hand-eye, time-offset and tip calibration");
  add_common(cal, c);
  cal->add_option("--traj", ca.traj, "Mocap trajectories (JSON lines, body H/CB)")->required();
  cal->add_option("--frames", ca.frames, "Camera trajectory (JSON lines)")->required();
  cal->add_option("--tip", ca.tip, "Tip-calibration samples (JSON lines)");
  cal->add_option("--window", ca.window, "Time-offset search window, seconds");

  LabelgenArgs la;
  auto* lab = app.add_subcommand("labelgen", "Synchronize, clean and label camera frames");
  add_common(lab, c);
  lab->add_option("--traj", la.traj, "Mocap trajectories (JSON lines, body H/CB)")->required();
  lab->add_option("--frames", la.frames, "Camera trajectory (default: camera.jsonl next to --traj)");
  lab->add_option("--calib", la.calib, "Calibration report JSON")->required();
  lab->add_flag("--flip-vertical", la.flip, "Mirror labels top-to-bottom");

  EncodeArgs ea;
  auto* enc = app.add_subcommand("encode", "Encode labels into per-anchor training targets");
  add_common(enc, c);
  enc->add_option("--schema", c.schema, "Field schema JSON")->required();
  enc->add_option("--labels", ea.labels, "Label file (JSON lines)")->required();

  EncodeArgs ra;
  auto* rt = app.add_subcommand("roundtrip", "Encode then decode every label and report the error");
  add_common(rt, c);
  rt->add_option("--schema", c.schema, "Field schema JSON")->required();
  rt->add_option("--labels", ra.labels, "Label file (JSON lines)")->required();

  EvaluateArgs va;
  auto* ev = app.add_subcommand("evaluate", "Score predictions against labels");
  add_common(ev, c);
  ev->add_option("--schema", c.schema, "Field schema JSON (selects evaluated quantities)");
  ev->add_option("--labels", va.labels, "Groundtruth label file")->required();
  ev->add_option("--pred", va.pred, "Prediction file")->required();
  ev->add_option("--score-sweep", va.sweep, "Extra score thresholds for a precision sweep")->delimiter(',');

  StatsArgs sa;
  auto* st = app.add_subcommand("stats", "Dataset histograms");
  add_common(st, c);
  st->add_option("--labels", sa.labels, "Label file (JSON lines)")->required();
  st->add_option("--bins", sa.bins, "Histogram bin count")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*sim) return run_simulate(c);
    if (*cal) return run_calibrate(c, ca);
    if (*lab) return run_labelgen(c, la);
    if (*enc) return run_encode(c, ea);
    if (*rt) return run_roundtrip(c, ra);
    if (*ev) return run_evaluate(c, va);
    if (*st) return run_stats(c, sa);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
