#include <gtest/gtest.h>

#include "hmdtrack/geometry.hpp"
#include "oracles.hpp"

namespace hmdtrack {
namespace {

constexpr double kHalfPi = kPi / 2;

void expect_pose_near(const Pose& a, const Pose& b, double tol) {
  EXPECT_LT(rotation_angle_between(a.rotation, b.rotation), tol);
  EXPECT_LT((a.translation - b.translation).norm(), tol);
}

TEST(Compose, IdentityAndInverse) {
  oracle::Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Pose p = rng.pose();
    expect_pose_near(compose(Pose::identity(), p), p, 1e-12);
    expect_pose_near(compose(p, p.inverse()), Pose::identity(), 1e-9);
  }
}

TEST(Compose, TranslateAfterRotateAppliedToPoint) {
  const Pose t = Pose::from_translation({0, 0, 1});
  const Pose r = Pose::from_rotation(Quaternion::from_axis_angle({0, 0, 1}, kHalfPi));
  const Vec3 p = compose(t, r).transform({1, 0, 0});
  EXPECT_NEAR(p.x(), 0.0, 1e-12);
  EXPECT_NEAR(p.y(), 1.0, 1e-12);
  EXPECT_NEAR(p.z(), 1.0, 1e-12);
}

TEST(Compose, MatchesHomogeneousProduct) {
  oracle::Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const Pose a = rng.pose(), b = rng.pose();
    const Eigen::Matrix4d expect = oracle::homogeneous(a) * oracle::homogeneous(b);
    EXPECT_LT((oracle::homogeneous(a * b) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Quaternion, CompositionIsAssociative) {
  oracle::Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Quaternion a = rng.quaternion(), b = rng.quaternion(), c = rng.quaternion();
    const Quaternion l = (a * b) * c, r = a * (b * c);
    const double d = std::min((l.wxyz() - r.wxyz()).norm(), (l.wxyz() + r.wxyz()).norm());
    EXPECT_LT(d, 1e-12);
  }
}

TEST(Quaternion, MatrixRoundTrip) {
  oracle::Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Quaternion q = rng.quaternion();
    const Mat3 R = q.to_matrix();
    EXPECT_LT((R - oracle::rotation(q)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((Quaternion::from_matrix(R).to_matrix() - R).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Quaternion, SignAmbiguityComparesEqual) {
  const Quaternion q = Quaternion::from_axis_angle({1, 2, 3}, 0.7);
  EXPECT_TRUE(same_rotation(q, q.negated()));
  EXPECT_GE(q.negated().canonical().w, 0.0);
}

TEST(Quaternion, ProductStaysNormalized) {
  oracle::Rng rng(5);
  Quaternion acc;
  for (int i = 0; i < 10000; ++i) acc = acc * rng.quaternion();
  EXPECT_NEAR(acc.norm(), 1.0, 1e-9);
}

TEST(Euler, MatchesZyxOracle) {
  oracle::Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const EulerAngles e{rng.uniform(-kPi, kPi), rng.uniform(-1.5, 1.5), rng.uniform(-kPi, kPi)};
    const Eigen::Matrix3d R = oracle::euler_zyx(e.roll, e.pitch, e.yaw);
    EXPECT_LT((e.to_quaternion().to_matrix() - R).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Euler, RoundTripAwayFromGimbalLock) {
  oracle::Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const EulerAngles e{rng.uniform(-kPi, kPi), rng.uniform(-kHalfPi + 1e-3, kHalfPi - 1e-3),
                        rng.uniform(-kPi, kPi)};
    const EulerAngles r = EulerAngles::from_quaternion(e.to_quaternion());
    EXPECT_LT(std::abs(wrap_angle(r.roll - e.roll)), 1e-9);
    EXPECT_LT(std::abs(r.pitch - e.pitch), 1e-9);
    EXPECT_LT(std::abs(wrap_angle(r.yaw - e.yaw)), 1e-9);
  }
}

TEST(WrapAngle, HalfOpenRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kHalfPi, 1e-12);
}

TEST(TipPoseInCamera, IdentityInputs) {
  const Pose I;
  expect_pose_near(tip_pose_in_camera(I, I, I, I), I, 1e-15);
}

TEST(TipPoseInCamera, ChainCancelsWhenBackEqualsHeadset) {
  oracle::Rng rng(8);
  const Pose h = rng.pose();
  expect_pose_near(tip_pose_in_camera(Pose{}, h, h, Pose{}), Pose{}, 1e-12);
}

TEST(TipPoseInCamera, IdentityOffsetsGiveHeadsetRelativePose) {
  oracle::Rng rng(9);
  const Pose h = rng.pose(), cb = rng.pose();
  expect_pose_near(tip_pose_in_camera(Pose{}, h, cb, Pose{}), h.inverse() * cb, 1e-12);
}

TEST(TipPoseInCamera, MatchesMatrixOracle) {
  oracle::Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = rng.pose(), b = rng.pose(2.0), c = rng.pose(2.0), d = rng.pose(0.2);
    const Eigen::Matrix4d got = oracle::homogeneous(tip_pose_in_camera(a, b, c, d));
    EXPECT_LT((got - oracle::tip_chain(a, b, c, d)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(TipOffset, Cases) {
  oracle::Rng rng(11);
  const Pose ct = rng.pose();
  expect_pose_near(tip_offset(ct, ct), Pose{}, 1e-12);
  expect_pose_near(tip_offset(Pose{}, ct), ct, 1e-12);
  for (int i = 0; i < 100; ++i) {
    const Pose cb = rng.pose(), t = rng.pose();
    expect_pose_near(cb * tip_offset(cb, t), t, 1e-9);
  }
}

TimedTrajectory spin_z(double rate_hz, double omega, std::size_t n) {
  TimedTrajectory tr;
  tr.rate_hz = rate_hz;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    tr.samples.push_back({t, Pose::from_rotation(Quaternion::from_axis_angle({0, 0, 1}, omega * t)), true});
  }
  return tr;
}

TEST(AngularVelocity, UniformSpin) {
  for (const auto& s : angular_velocity(spin_z(100.0, 1.0, 200))) {
    EXPECT_LT((s.omega - Vec3(0, 0, 1)).norm(), 1e-6);
  }
}

TEST(AngularVelocity, ConstantPoseIsZero) {
  TimedTrajectory tr;
  for (int i = 0; i < 5; ++i) tr.samples.push_back({0.1 * i, Pose{Quaternion::from_axis_angle({1, 0, 0}, 0.3), {}}, true});
  for (const auto& s : angular_velocity(tr)) EXPECT_LT(s.omega.norm(), 1e-12);
}

TEST(AngularVelocity, TimeReversalNegates) {
  oracle::Rng rng(12);
  TimedTrajectory fwd, rev;
  Quaternion q;
  for (int i = 0; i < 50; ++i) {
    q = q * Quaternion::from_rotation_vector(rng.vec(0.05));
    fwd.samples.push_back({0.01 * i, Pose::from_rotation(q), true});
  }
  for (int i = 49; i >= 0; --i) rev.samples.push_back({0.01 * (49 - i), fwd.samples[static_cast<std::size_t>(i)].pose, true});
  const auto a = angular_velocity(fwd), b = angular_velocity(rev);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((a[i].omega + b[a.size() - 1 - i].omega).norm(), 1e-9);
}

TEST(AngularVelocity, TooShort) {
  TimedTrajectory tr;
  tr.samples.push_back({0.0, Pose{}, true});
  EXPECT_THROW(
      {
        try {
          angular_velocity(tr);
        } catch (const Error& e) {
          EXPECT_STREQ(e.what(), "trajectory too short");
          throw;
        }
      },
      Error);
}

TEST(Interpolate, ExactAtSamplesAndSlerpMidpoint) {
  TimedTrajectory tr;
  tr.samples.push_back({0.0, Pose{}, true});
  tr.samples.push_back({1.0, Pose{Quaternion::from_axis_angle({0, 0, 1}, kHalfPi), {2, 0, 0}}, true});
  const Pose mid = interpolate(tr, 0.5);
  EXPECT_LT(rotation_angle_between(mid.rotation, Quaternion::from_axis_angle({0, 0, 1}, kPi / 4)), 1e-9);
  EXPECT_LT((mid.translation - Vec3(1, 0, 0)).norm(), 1e-15);
  const Pose end = interpolate(tr, 1.0);
  EXPECT_EQ(end.rotation.wxyz(), tr.samples[1].pose.rotation.wxyz());
  EXPECT_EQ(end.translation, tr.samples[1].pose.translation);
}

TEST(Interpolate, RefusesExtrapolation) {
  TimedTrajectory tr;
  tr.samples.push_back({0.0, Pose{}, true});
  tr.samples.push_back({1.0, Pose{}, true});
  EXPECT_THROW(interpolate(tr, 1.5), Error);
  EXPECT_THROW(interpolate(tr, -0.1), Error);
}

TEST(Trajectory, RejectsNonIncreasingTimestamps) {
  TimedTrajectory tr;
  tr.samples.push_back({0.0, Pose{}, true});
  tr.samples.push_back({0.0, Pose{}, true});
  EXPECT_THROW(tr.validate(), Error);
}

}  // namespace
}  // namespace hmdtrack
