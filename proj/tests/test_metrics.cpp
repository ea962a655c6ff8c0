#include <gtest/gtest.h>

#include <random>

#include "arttrack/metrics.hpp"
#include "oracles.hpp"

using namespace arttrack;

namespace {

FrameResult record(std::size_t frame, std::vector<Pose> poses) {
  FrameResult r;
  r.frame = frame;
  r.poses = std::move(poses);
  return r;
}

}  // namespace

TEST(RotationError, HandValues) {
  const Pose a = Pose::identity();
  EXPECT_NEAR(rotation_error(a, Pose::from_rotation(axis_angle(Vec3::UnitZ(), kPi / 2))), 90.0, 1e-12);
  EXPECT_NEAR(rotation_error(a, Pose::from_rotation(axis_angle(Vec3::UnitX(), 0.01 * kPi / 180))), 0.01, 1e-9);
  EXPECT_NEAR(rotation_error(a, Pose::from_rotation(axis_angle(Vec3::UnitY(), kPi))), 180.0, 1e-6);
  EXPECT_EQ(rotation_error(a, Pose::from_translation(Vec3(5, 0, 0))), 0.0);
}

TEST(RotationError, MatchesLogMapAngle) {
  std::mt19937_64 rng(131);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = oracle::random_pose(rng), b = oracle::random_pose(rng);
    const Mat3 rel = a.rotation.transpose() * b.rotation;
    const Mat4 log = oracle::logm(Pose::from_rotation(rel).matrix());
    const double angle = oracle::vee4(log).omega.norm();
    if (angle > kPi - 1e-3) continue;
    ASSERT_NEAR(rotation_error(a, b), angle * 180.0 / kPi, 1e-9);
    ASSERT_NEAR(rotation_error(a, b), rotation_error(b, a), 1e-9);
  }
}

TEST(TranslationError, ThreeFourFive) {
  EXPECT_DOUBLE_EQ(translation_error(Pose::from_translation(Vec3(1, 1, 1)), Pose::from_translation(Vec3(4, 5, 1))),
                   5.0);
}

TEST(Iou3d, IdenticalAndDisjoint) {
  const Vec3 one = Vec3::Ones();
  const IouEstimate same = iou3d(Pose::identity(), one, Pose::identity(), one, one, 10000, 1);
  EXPECT_EQ(same.value, 1.0);
  const IouEstimate apart =
      iou3d(Pose::identity(), one, Pose::from_translation(Vec3(3, 0, 0)), one, one, 10000, 1);
  EXPECT_EQ(apart.value, 0.0);
}

TEST(Iou3d, HalfOverlapIsOneThird) {
  const Vec3 one = Vec3::Ones();
  const IouEstimate e = iou3d(Pose::identity(), one, Pose::from_translation(Vec3(0.5, 0, 0)), one, one, 100000, 2);
  EXPECT_NEAR(e.value, 1.0 / 3.0, 0.01);
  EXPECT_NEAR(e.value, 1.0 / 3.0, 3.0 * e.std_error);
  EXPECT_GT(e.std_error, 0.0);
}

TEST(Iou3d, RotationInvariantAndScaleAware) {
  std::mt19937_64 rng(132);
  const Vec3 ext(0.4, 0.2, 0.1);
  const Vec3 scale = ext / ext.maxCoeff();
  const Pose g = oracle::random_pose(rng);
  const Pose shift = Pose::from_translation(Vec3(0.1, 0.0, 0.0));
  const double a = iou3d(Pose::identity(), scale, shift, scale, ext, 50000, 3).value;
  const double b = iou3d(g, scale, g * shift, scale, ext, 50000, 3).value;
  // Overlap of two 0.4 boxes offset by 0.1 along their long axis: 0.3 / 0.5.
  EXPECT_NEAR(a, 0.6, 0.01);
  EXPECT_NEAR(b, 0.6, 0.01);
  EXPECT_THROW(iou3d(g, scale, g, scale, Vec3(0, 1, 1), 10, 0), Error);
}

TEST(Median, OddEvenEmpty) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(CumulativeError, ConstantDriftAccumulates) {
  std::vector<FrameResult> est, truth;
  for (std::size_t t = 0; t <= 10; ++t) {
    const double deg = static_cast<double>(t);
    truth.push_back(record(t, {Pose::identity()}));
    est.push_back(record(t, {Pose::from_rotation(axis_angle(Vec3::UnitZ(), deg * kPi / 180.0))}));
  }
  const auto c = cumulative_error(est, truth, 1.0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0].final_rotation, 10.0, 1e-9);
  EXPECT_EQ(c[0].final_translation, 0.0);
  ASSERT_EQ(c[0].series.size(), 11u);
  for (std::size_t t = 0; t <= 10; ++t) EXPECT_NEAR(c[0].series[t], static_cast<double>(t), 1e-9);
}

TEST(CumulativeError, TranslationOverDiagonal) {
  const std::vector<FrameResult> est{record(0, {Pose::from_translation(Vec3(0.3, 0.4, 0.0))})};
  const std::vector<FrameResult> truth{record(0, {Pose::identity()})};
  const auto c = cumulative_error(est, truth, 2.0);
  EXPECT_NEAR(c[0].final_translation, 0.5, 1e-15);
  EXPECT_NEAR(c[0].composite, 0.25, 1e-15);
}

TEST(CumulativeError, LengthMismatch) {
  const std::vector<FrameResult> one{record(0, {Pose::identity()})};
  const std::vector<FrameResult> two{record(0, {Pose::identity()}), record(1, {Pose::identity()})};
  EXPECT_THROW(cumulative_error(one, two, 1.0), LengthMismatch);
  const std::vector<FrameResult> wide{record(0, {Pose::identity(), Pose::identity()})};
  EXPECT_THROW(cumulative_error(wide, one, 1.0), LengthMismatch);
  EXPECT_THROW(cumulative_error(one, one, 0.0), Error);
}
