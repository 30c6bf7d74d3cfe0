#include <gtest/gtest.h>

#include "hmdtrack/pipeline.hpp"
#include "hmdtrack/simulator.hpp"
#include "oracles.hpp"

namespace hmdtrack {
namespace {

SimConfig quiet(std::uint64_t seed, double duration = 10.0) {
  SimConfig c;
  c.seed = seed;
  c.duration = duration;
  c.noise = NoiseConfig::none();
  return c;
}

TEST(GenTrajectories, Deterministic) {
  const auto a = gen_trajectories(quiet(5));
  const auto b = gen_trajectories(quiet(5));
  const auto c = gen_trajectories(quiet(6));
  ASSERT_EQ(a.controller.size(), b.controller.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.controller.size(); ++i) {
    EXPECT_EQ(a.controller.samples[i].pose.translation, b.controller.samples[i].pose.translation);
    EXPECT_EQ(a.headset.samples[i].pose.rotation.wxyz(), b.headset.samples[i].pose.rotation.wxyz());
    differs |= a.controller.samples[i].pose.translation != c.controller.samples[i].pose.translation;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.controller.size(), 5001u);
}

TEST(GenTrajectories, TipWithinOneMeterOfCamera) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& r : render_dataset(quiet(seed, 30.0), default_rig())) {
      EXPECT_LT(r.T_Cam_CT.translation.norm(), 1.0);
      EXPECT_GT(r.T_Cam_CT.translation.z(), 0.0);
    }
  }
}

TEST(GenTrajectories, AngularVelocityIsSmooth) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto tr = gen_trajectories(quiet(seed, 20.0));
    for (const auto* t : {&tr.controller, &tr.headset}) {
      const auto w = angular_velocity(*t);
      double worst = 0.0;
      for (std::size_t i = 2; i + 2 < w.size(); ++i) {
        worst = std::max(worst, (w[i + 1].omega - w[i].omega).norm() / (w[i + 1].t - w[i].t));
      }
      EXPECT_LT(worst, 10.0) << seed;
    }
  }
}

TEST(ObserveMocap, ZeroNoiseIsIdentity) {
  const SimConfig cfg = quiet(1);
  const auto tr = gen_trajectories(cfg);
  const auto obs = observe_mocap(tr.controller, cfg, MocapBody::controller);
  ASSERT_EQ(obs.size(), tr.controller.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    EXPECT_TRUE(obs.samples[i].valid);
    EXPECT_EQ(obs.samples[i].pose.translation, tr.controller.samples[i].pose.translation);
    EXPECT_EQ(obs.samples[i].pose.rotation.wxyz(), tr.controller.samples[i].pose.rotation.wxyz());
  }
}

TEST(ObserveMocap, NoiseRmseMatchesConfig) {
  SimConfig cfg;
  cfg.seed = 3;
  TimedTrajectory still;
  still.rate_hz = 500.0;
  const Pose p{Quaternion::from_axis_angle({1, 2, 3}, 0.7), {0.3, 1.2, 1.6}};
  for (int i = 0; i < 100000; ++i) still.samples.push_back({i / 500.0, p, true});
  for (MocapBody body : {MocapBody::headset, MocapBody::controller}) {
    const auto obs = observe_mocap(still, cfg, body);
    double r2 = 0.0, t2 = 0.0;
    for (const auto& s : obs.samples) {
      r2 += std::pow(rotation_angle_between(s.pose.rotation, p.rotation), 2);
      t2 += (s.pose.translation - p.translation).squaredNorm();
    }
    const double n = static_cast<double>(obs.size());
    const bool head = body == MocapBody::headset;
    const double sr = head ? cfg.noise.rot_headset : cfg.noise.rot_ctrl;
    const double st = head ? cfg.noise.trans_headset : cfg.noise.trans_ctrl;
    EXPECT_NEAR(std::sqrt(r2 / n), sr, 0.03 * sr);
    EXPECT_NEAR(std::sqrt(t2 / n), st, 0.03 * st);
  }
}

TEST(ObserveMocap, DropoutGapsAndTransient) {
  SimConfig cfg = quiet(4, 30.0);
  cfg.noise = NoiseConfig{};
  cfg.dropout = {0.5, 40.0};
  const auto tr = gen_trajectories(cfg);
  const auto obs = observe_mocap(tr.headset, cfg, MocapBody::headset);
  std::size_t invalid = 0;
  for (const auto& s : obs.samples) invalid += !s.valid;
  EXPECT_GT(invalid, 0u);
  EXPECT_LT(invalid, obs.size() / 2);
}

TEST(RenderDataset, RecordCount) {
  for (double d : {1.0, 7.3, 20.0}) {
    SimConfig cfg = quiet(2, d);
    const auto recs = render_dataset(cfg, default_rig());
    EXPECT_NEAR(static_cast<double>(recs.size()), d * cfg.camera_rate, 1.0 + 1e-9) << d;
  }
}

TEST(RenderDataset, CleaningRemovesGapPlusTwenty) {
  SimConfig cfg = quiet(7, 60.0);
  cfg.dropout = {0.1, 60.0};
  const auto recs = render_dataset(cfg, default_rig());
  const auto [kept, report] = clean_dataset(recs);
  std::set<std::int64_t> kept_ids;
  for (const auto& r : kept) kept_ids.insert(r.frame_id);
  // Isolated gaps: invalid run followed by more than 20 valid frames.
  std::size_t isolated = 0;
  for (std::size_t i = 0; i < recs.size();) {
    if (recs[i].tracking_valid) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < recs.size() && !recs[end].tracking_valid) ++end;
    if (end + kReinitFrames < recs.size()) {
      bool clear = true;
      for (std::size_t k = end; k <= end + kReinitFrames; ++k) clear &= recs[k].tracking_valid;
      if (clear) {
        ++isolated;
        for (std::size_t k = i; k < end + kReinitFrames; ++k) EXPECT_FALSE(kept_ids.count(recs[k].frame_id)) << k;
        EXPECT_TRUE(kept_ids.count(recs[end + kReinitFrames].frame_id));
      }
    }
    i = end;
  }
  EXPECT_GT(isolated, 0u);
  EXPECT_EQ(report.total(), recs.size());
  EXPECT_EQ(report.dropped_range, 0u);
}

TEST(RenderDataset, NoiselessChainMatchesGroundTruth) {
  SimConfig cfg = quiet(8, 20.0);
  cfg.clock_offset = 0.137;
  const StereoRig rig = default_rig();
  const SimSession s = simulate_session(cfg, rig);
  const CalibrationReport cal = calibrate_session(s.mocap_headset, s.camera, s.tip_samples);
  EXPECT_NEAR(cal.association_offset, 0.137, 1e-9);
  const SceneCalibration truth;
  EXPECT_LT(rotation_angle_between(cal.hand_eye.X.rotation, truth.T_H_Cam.rotation), 1e-9);
  EXPECT_LT((cal.hand_eye.X.translation - truth.T_H_Cam.translation).norm(), 1e-9);
  const auto recs = synchronize_records(s.mocap_headset, s.mocap_controller_back, s.camera, cal.hand_eye.X,
                                        *cal.tip_offset, cal.association_offset);
  ASSERT_EQ(recs.size(), s.records.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    ASSERT_TRUE(recs[i].tracking_valid);
    EXPECT_LT((recs[i].T_Cam_CT.translation - s.records[i].T_Cam_CT.translation).norm(), 1e-9);
    EXPECT_LT(rotation_angle_between(recs[i].T_Cam_CT.rotation, s.records[i].T_Cam_CT.rotation), 1e-9);
  }
}

std::vector<LabelRow> sample_labels(std::uint64_t seed) {
  const auto res = label_records(render_dataset(quiet(seed, 20.0), default_rig()), default_rig());
  std::vector<LabelRow> rows;
  for (const auto& s : res.samples) rows.push_back(to_label_row(s));
  return rows;
}

TEST(OraclePredict, ZeroNoiseIsGroundTruth) {
  const auto labels = sample_labels(9);
  ASSERT_FALSE(labels.empty());
  const auto preds = oracle_predict(labels, OraclePredictor{});
  const auto rep = evaluate(build_eval_frames(labels, preds, default_rig()));
  for (const auto& [t, p] : rep.map_at) EXPECT_EQ(p, 1.0);
  EXPECT_EQ(rep.uv->mae, 0.0);
  EXPECT_EQ(rep.xyz->mae, 0.0);
}

TEST(OraclePredict, DeterministicPerSeed) {
  const auto labels = sample_labels(10);
  OraclePredictor o;
  o.pixel_noise_sigma = 2.0;
  o.seed = 4;
  const auto a = oracle_predict(labels, o);
  const auto b = oracle_predict(labels, o);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].kp_l.u, b[i].kp_l.u);
}

TEST(OraclePredict, NoiseAblationMonotone) {
  const auto labels = sample_labels(11);
  const StereoRig rig = default_rig();
  auto mean_mae = [&](double sigma, auto field) {
    double m = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      OraclePredictor o;
      o.seed = seed;
      field(o) = sigma;
      const auto rep = evaluate(build_eval_frames(labels, oracle_predict(labels, o), rig, {true, true, {}}));
      m += rep.uv->mae + rep.xyz->mae + (*rep.orient)[0].mae + (*rep.orient)[1].mae + (*rep.orient)[2].mae;
    }
    return m / 10.0;
  };
  using Field = double& (*)(OraclePredictor&);
  const std::vector<std::pair<Field, std::vector<double>>> cases{
      {[](OraclePredictor& o) -> double& { return o.pixel_noise_sigma; }, {0.0, 1.0, 3.0, 10.0}},
      {[](OraclePredictor& o) -> double& { return o.depth_noise_sigma; }, {0.0, 0.005, 0.02, 0.05}},
      {[](OraclePredictor& o) -> double& { return o.orientation_noise_sigma; }, {0.0, 0.01, 0.05, 0.2}},
  };
  for (const auto& [field, sigmas] : cases) {
    double prev = -1.0;
    for (double s : sigmas) {
      const double m = mean_mae(s, field);
      EXPECT_GE(m, prev) << s;
      prev = m;
    }
  }
}

TEST(SimConfig, Validation) {
  SimConfig c;
  c.camera_rate = 1000.0;
  EXPECT_THROW(c.validate(), Error);
  c = SimConfig{};
  c.noise.rot_ctrl = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = SimConfig{};
  c.duration = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace hmdtrack
