#include <gtest/gtest.h>

#include <set>

#include "hmdtrack/labelgen.hpp"
#include "oracles.hpp"

namespace hmdtrack {
namespace {

// Tip poses in the working volume in front of the left camera.
Pose random_tip(oracle::Rng& rng) {
  return {rng.quaternion(), {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.25, 0.9)}};
}

TEST(BoundingCube, IdentityGivesBounds) {
  const auto c = bounding_cube_corners(Pose{});
  std::set<std::array<double, 3>> got;
  for (const auto& p : c) got.insert({p.x(), p.y(), p.z()});
  std::set<std::array<double, 3>> expect;
  for (double x : {-0.03, 0.05})
    for (double y : {-0.05, 0.01})
      for (double z : {-0.01, 0.10}) expect.insert({x, y, z});
  EXPECT_EQ(got, expect);
}

TEST(BoundingCube, TranslationShiftsZ) {
  const auto a = bounding_cube_corners(Pose{});
  const auto b = bounding_cube_corners(Pose::from_translation({0, 0, 0.5}));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(b[i], a[i] + Vec3(0, 0, 0.5));
}

TEST(BoundingCube, RotationAboutZ) {
  const auto a = bounding_cube_corners(Pose{});
  const auto b = bounding_cube_corners(Pose::from_rotation(Quaternion::from_axis_angle({0, 0, 1}, kPi / 2)));
  const Eigen::Matrix3d Rz = oracle::euler_zyx(0, 0, kPi / 2);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_LT((b[i] - Rz * a[i]).norm(), 1e-15);
}

TEST(HandBox, CenteredCubeOnAxis) {
  const FisheyeCamera cam;
  // Shift the cube so its center sits on the optical axis.
  const Pose T = Pose::from_translation({-0.01, 0.02, 0.5 - 0.045});
  const Box2D b = project_hand_box(bounding_cube_corners(T), cam);
  EXPECT_NEAR(b.cx, 0.5, 0.01);
  EXPECT_NEAR(b.cy, 0.5, 0.01);
}

TEST(HandBox, ContainmentAndMinimality) {
  oracle::Rng rng(1);
  const FisheyeCamera cam;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto corners = bounding_cube_corners(random_tip(rng));
    Box2D b;
    try {
      b = project_hand_box(corners, cam);
    } catch (const Error&) {
      continue;
    }
    const double x0 = b.xmin() * cam.width, x1 = b.xmax() * cam.width;
    const double y0 = b.ymin() * cam.height, y1 = b.ymax() * cam.height;
    std::vector<Eigen::Vector2d> px;
    for (const auto& c : corners) {
      if (std::atan2(std::hypot(c.x(), c.y()), c.z()) > cam.max_theta) continue;
      Eigen::Vector2d p = oracle::equidistant(cam.fx, cam.cx, cam.cy, c);
      p.x() = std::clamp(p.x(), 0.0, double(cam.width));
      p.y() = std::clamp(p.y(), 0.0, double(cam.height));
      px.push_back(p);
      EXPECT_GE(p.x(), x0 - 1e-9);
      EXPECT_LE(p.x(), x1 + 1e-9);
      EXPECT_GE(p.y(), y0 - 1e-9);
      EXPECT_LE(p.y(), y1 + 1e-9);
    }
    auto lost = [&](double nx0, double nx1, double ny0, double ny1) {
      return std::any_of(px.begin(), px.end(), [&](const Eigen::Vector2d& p) {
        return p.x() < nx0 || p.x() > nx1 || p.y() < ny0 || p.y() > ny1;
      });
    };
    EXPECT_TRUE(lost(x0 + 1, x1, y0, y1));
    EXPECT_TRUE(lost(x0, x1 - 1, y0, y1));
    EXPECT_TRUE(lost(x0, x1, y0 + 1, y1));
    EXPECT_TRUE(lost(x0, x1, y0, y1 - 1));
  }
}

TEST(HandBox, NormalizedAndClipped) {
  const FisheyeCamera cam;
  // Cube straddling the top image border (the default lens only overfills
  // the image vertically).
  const Box2D b = project_hand_box(bounding_cube_corners(Pose::from_translation({0.0, -0.9, 0.05})), cam);
  EXPECT_NEAR(b.ymin(), 0.0, 1e-12);
  EXPECT_GT(b.ymax(), 0.0);
  EXPECT_LE(b.ymax(), 1.0);
}

TEST(HandBox, BehindCameraNotVisible) {
  const FisheyeCamera cam;
  try {
    project_hand_box(bounding_cube_corners(Pose::from_translation({0, 0, -1.0})), cam);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "hand not visible");
  }
}

TEST(LabeledSample, RightKeypointThroughExtrinsics) {
  oracle::Rng rng(2);
  StereoRig rig = default_rig();
  rig.T_left_right.rotation = Quaternion::from_axis_angle({0, 1, 0}, 0.05);
  for (int i = 0; i < 200; ++i) {
    FrameRecord r;
    r.T_Cam_CT = random_tip(rng);
    const LabeledSample s = make_labeled_sample(r, rig);
    const Eigen::Vector4d p = oracle::inverse(oracle::homogeneous(rig.T_left_right)) *
                              r.T_Cam_CT.translation.homogeneous();
    const Eigen::Vector2d uv = oracle::equidistant(160, 320, 240, p.head<3>());
    EXPECT_LT(std::hypot(s.keypoint_right.u - uv.x(), s.keypoint_right.v - uv.y()), 1e-6);
    EXPECT_NEAR(s.keypoint_right.z, p.z(), 1e-12);
    EXPECT_NEAR(s.keypoint_left.z, r.T_Cam_CT.translation.z(), 1e-15);
  }
}

TEST(LabelRow, RebuildRecoversPose) {
  oracle::Rng rng(3);
  const StereoRig rig = default_rig();
  for (int i = 0; i < 100; ++i) {
    FrameRecord r;
    r.frame_id = i;
    r.T_Cam_CT = random_tip(rng);
    const LabeledSample back = from_label_row(to_label_row(make_labeled_sample(r, rig)), rig);
    EXPECT_LT((back.record.T_Cam_CT.translation - r.T_Cam_CT.translation).norm(), 1e-9);
    EXPECT_TRUE(same_rotation(back.record.T_Cam_CT.rotation, r.T_Cam_CT.rotation));
  }
}

std::vector<FrameRecord> stream(std::size_t n) {
  std::vector<FrameRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].frame_id = static_cast<std::int64_t>(i);
    out[i].T_Cam_CT = Pose::from_translation({0.1, 0.1, 0.5});
  }
  return out;
}

std::vector<std::int64_t> ids(const std::vector<FrameRecord>& rs) {
  std::vector<std::int64_t> out;
  for (const auto& r : rs) out.push_back(r.frame_id);
  return out;
}

TEST(Clean, AllValidKept) {
  const auto [kept, rep] = clean_dataset(stream(50));
  EXPECT_EQ(kept.size(), 50u);
  EXPECT_EQ(rep.kept, 50u);
}

TEST(Clean, SingleDropoutRemovesTwentyOneFrames) {
  auto rs = stream(100);
  rs[30].tracking_valid = false;
  const auto [kept, rep] = clean_dataset(rs);
  const auto kept_ids = ids(kept);
  const std::set<std::int64_t> left(kept_ids.begin(), kept_ids.end());
  for (std::int64_t i = 0; i < 100; ++i) EXPECT_EQ(left.count(i) == 0, i >= 30 && i <= 50) << i;
  EXPECT_EQ(rep.dropped_missing, 1u);
  EXPECT_EQ(rep.dropped_reinit, 20u);
  EXPECT_EQ(rep.total(), 100u);
}

TEST(Clean, WindowCountsFromGapEnd) {
  auto rs = stream(100);
  for (int i = 10; i < 15; ++i) rs[static_cast<std::size_t>(i)].tracking_valid = false;
  const auto [kept, rep] = clean_dataset(rs);
  EXPECT_EQ(rep.dropped_missing, 5u);
  EXPECT_EQ(rep.dropped_reinit, 20u);
  EXPECT_EQ(kept.front().frame_id, 0);
  EXPECT_EQ(kept[10].frame_id, 35);
}

TEST(Clean, RangeAndReasonOrder) {
  auto rs = stream(60);
  rs[5].T_Cam_CT.translation = {0, 0, 1.2};
  rs[40].tracking_valid = false;
  rs[45].T_Cam_CT.translation = {0, 0, 1.2};  // inside the reinit window
  const auto [kept, rep] = clean_dataset(rs);
  EXPECT_EQ(rep.dropped_range, 1u);
  EXPECT_EQ(rep.dropped_missing, 1u);
  EXPECT_EQ(rep.dropped_reinit, 19u);
  EXPECT_EQ(rep.total(), 60u);
  for (const auto& r : kept) EXPECT_LE(r.T_Cam_CT.translation.norm(), kMaxTipRange);
}

TEST(Clean, Idempotent) {
  oracle::Rng rng(4);
  auto rs = stream(300);
  for (auto& r : rs) {
    if (rng.uniform(0, 1) < 0.05) r.tracking_valid = false;
    if (rng.uniform(0, 1) < 0.05) r.T_Cam_CT.translation.z() = 1.5;
  }
  const auto once = clean_dataset(rs).first;
  const auto twice = clean_dataset(once).first;
  EXPECT_EQ(ids(once), ids(twice));
}

TEST(Suspect, Threshold) {
  std::vector<LabeledSample> s(3);
  std::vector<Vec3> pred;
  for (int i = 0; i < 3; ++i) {
    s[static_cast<std::size_t>(i)].record.frame_id = 10 + i;
    s[static_cast<std::size_t>(i)].record.T_Cam_CT.translation = {0.0, 0.0, 0.5};
    pred.push_back({0.0, 0.0, 0.5});
  }
  EXPECT_TRUE(flag_suspect_frames(s, pred).empty());
  pred[1].x() += 0.05;
  EXPECT_EQ(flag_suspect_frames(s, pred), std::vector<std::int64_t>{11});
  pred.pop_back();
  try {
    flag_suspect_frames(s, pred);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "prediction/record count mismatch");
  }
}

TEST(Suspect, ExactlyThresholdNotFlagged) {
  std::vector<LabeledSample> s(1);
  s[0].record.T_Cam_CT.translation = {0.0, 0.0, 0.0};
  EXPECT_TRUE(flag_suspect_frames(s, {Vec3(0.03, 0.0, 0.0)}).empty());
}

TEST(FlipVertical, MirrorsGeometry) {
  oracle::Rng rng(5);
  const StereoRig rig = default_rig();
  for (int i = 0; i < 100; ++i) {
    FrameRecord r;
    r.T_Cam_CT = random_tip(rng);
    const LabeledSample s = make_labeled_sample(r, rig);
    const LabeledSample f = flip_vertical(s, rig);
    // The flipped pose is the original conjugated by diag(1, -1, 1).
    Eigen::Matrix3d M = Eigen::Vector3d(1, -1, 1).asDiagonal();
    const Eigen::Matrix3d expect = M * oracle::rotation(s.record.T_Cam_CT.rotation) * M;
    EXPECT_LT((oracle::rotation(f.record.T_Cam_CT.rotation) - expect).cwiseAbs().maxCoeff(), 1e-12);
    const Vec2 uv = project(rig.left, f.record.T_Cam_CT.translation);
    EXPECT_NEAR(uv.y(), f.keypoint_left.v, 1e-9);
    EXPECT_NEAR(f.box_left.cy, 1.0 - s.box_left.cy, 1e-15);
    const LabeledSample back = flip_vertical(f, rig);
    EXPECT_TRUE(same_rotation(back.record.T_Cam_CT.rotation, s.record.T_Cam_CT.rotation));
  }
}

}  // namespace
}  // namespace hmdtrack
