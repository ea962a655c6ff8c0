#include <gtest/gtest.h>

#include <random>

#include "arttrack/canon.hpp"
#include "arttrack/synth.hpp"
#include "oracles.hpp"

using namespace arttrack;

namespace {

PointCloud labelled_box(int label, std::uint64_t seed) {
  return sample_box_surface(Vec3(0.1 * label, 0.0, 0.0), Vec3(0.3, 0.2, 0.1), 200, label, seed);
}

}  // namespace

TEST(Keyframe, TransformInvertsPose) {
  std::mt19937_64 rng(81);
  const std::vector<Pose> poses{oracle::random_pose(rng), oracle::random_pose(rng)};
  const Keyframe k = Keyframe::from_poses(3, 7, poses);
  for (std::size_t p = 0; p < poses.size(); ++p)
    EXPECT_LT(((k.transform[p] * poses[p]).matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(k.segment, 3u);
  EXPECT_EQ(k.frame, 7u);
}

TEST(QuasiCanonicalize, FrameAtKeyframeIsCanonical) {
  std::mt19937_64 rng(82);
  const PointCloud canonical = labelled_box(0, 83);
  const Pose t_n = oracle::random_pose(rng);
  const Keyframe k = Keyframe::from_poses(0, 0, {t_n});
  const PointCloud out = quasi_canonicalize(transformed(canonical, t_n), k, 0);
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_LT((out.points[i] - canonical.points[i]).norm(), 1e-9);
}

TEST(QuasiCanonicalize, RecoversIncrement) {
  std::mt19937_64 rng(84);
  const PointCloud canonical = labelled_box(1, 85);
  PointCloud frame;
  const Pose t_n = oracle::random_pose(rng);
  const Pose delta = oracle::random_pose(rng, 0.2);
  // Frame t seen from keyframe n: T_t = T_n * dT, so K * T_t * P_c = dT * P_c.
  frame.append(transformed(labelled_box(0, 86), t_n));
  frame.append(transformed(canonical, t_n * delta));
  const Keyframe k = Keyframe::from_poses(0, 0, {t_n, t_n});
  const PointCloud out = quasi_canonicalize(frame, k, 1);
  ASSERT_EQ(out.size(), canonical.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    ASSERT_LT((out.points[i] - apply(delta, canonical.points[i])).norm(), 1e-9);
}

TEST(QuasiCanonicalize, IdentityKeyframeIsNoOpAndBadPartThrows) {
  const PointCloud c = labelled_box(0, 87);
  const Keyframe k = Keyframe::from_poses(0, 0, {Pose::identity()});
  EXPECT_EQ(quasi_canonicalize(c, k, 0).points, c.points);
  EXPECT_THROW(quasi_canonicalize(c, k, 1), UnknownPart);
  EXPECT_THROW(quasi_canonicalize(c, k, -1), UnknownPart);
}

TEST(SegmentEnergy, HandValues) {
  const PointCloud x = labelled_box(0, 88);
  EXPECT_EQ(segment_energy(x, x), 0.0);

  // 100 points on a line with spacing 1 m, shifted by 0.1 m along it: every
  // nearest neighbour is the shifted copy, so D_C = 0.2, D_H = 0.1.
  PointCloud a;
  for (int i = 0; i < 100; ++i) a.push_back({0.0, 0.0, static_cast<double>(i)}, Vec3::UnitX(), 0);
  const PointCloud b = transformed(a, Pose::from_translation(Vec3(0.1, 0.0, 0.0)));
  EXPECT_NEAR(segment_energy(b, a), 0.003, 1e-15);
  EXPECT_THROW(segment_energy(PointCloud{}, a), EmptyCloud);
}

TEST(SegmentEnergy, DecreasesTowardsTruth) {
  const PointCloud obs = labelled_box(0, 89);
  const Twist offset{Vec3(0.1, -0.05, 0.2), Vec3(0.03, 0.02, -0.01)};
  double prev = 1e300;
  for (int s = 10; s >= 0; --s) {
    const PointCloud pred = transformed(obs, exp_map(offset * (0.1 * s)));
    const double e = segment_energy(pred, obs);
    EXPECT_LE(e, prev + 1e-15) << s;
    prev = e;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(MaybeUpdateKeyframe, ThresholdIsStrict) {
  const PointCloud frame = labelled_box(0, 90);
  const std::vector<Pose> poses{Pose::from_translation(Vec3(1, 2, 3))};
  SegmentState s;
  s.keyframe = Keyframe::from_poses(0, 0, {Pose::identity()});

  const auto below = maybe_update_keyframe(s, 0.005, 4, frame, poses, 0.01);
  EXPECT_TRUE(below.updated);
  EXPECT_EQ(below.state.keyframe.frame, 4u);
  EXPECT_EQ(below.state.keyframe.segment, 1u);
  EXPECT_EQ(below.state.frames_since, 0u);
  EXPECT_LT((below.state.keyframe.pose(0).translation - Vec3(1, 2, 3)).norm(), 1e-15);

  const auto above = maybe_update_keyframe(s, 0.02, 4, frame, poses, 0.01);
  EXPECT_FALSE(above.updated);
  EXPECT_EQ(above.state.keyframe.frame, 0u);
  EXPECT_EQ(above.state.frames_since, 1u);

  const auto equal = maybe_update_keyframe(s, 0.01, 4, frame, poses, 0.01);
  EXPECT_FALSE(equal.updated);
  EXPECT_EQ(equal.state.energy_history, std::vector<double>{0.01});
}

TEST(MaybeUpdateKeyframe, Modes) {
  const PointCloud frame = labelled_box(0, 91);
  SegmentState s;
  s.keyframe = Keyframe::from_poses(0, 0, {Pose::identity()});
  EXPECT_FALSE(maybe_update_keyframe(s, 0.0, 1, frame, {Pose::identity()}, 0.01, KeyframeMode::Fixed).updated);
  EXPECT_TRUE(maybe_update_keyframe(s, 5.0, 1, frame, {Pose::identity()}, 0.01, KeyframeMode::None).updated);
  EXPECT_THROW(maybe_update_keyframe(s, 0.0, 1, frame, {Pose::identity()}, 0.0), Error);
  EXPECT_EQ(keyframe_mode_from_string("fixed"), KeyframeMode::Fixed);
  EXPECT_STREQ(to_string(KeyframeMode::None), "none");
  EXPECT_THROW(keyframe_mode_from_string("sometimes"), ParseError);
}

TEST(KeyframeChain, ComposedIncrementsReproducePose) {
  std::mt19937_64 rng(92);
  const Pose t0 = oracle::random_pose(rng);
  std::vector<Pose> truth{t0};
  for (int t = 1; t <= 60; ++t) truth.push_back(truth.back() * exp_map(oracle::random_twist(rng, 0.05, 0.01)));
  // Segments start every 7 frames; each stores its increment relative to the
  // previous keyframe.
  Pose chained = t0;
  std::size_t key = 0;
  for (std::size_t t = 7; t < truth.size(); t += 7) {
    chained = chained * (inverse(truth[key]) * truth[t]);
    key = t;
    const double tol = 1e-6 * static_cast<double>(t);
    EXPECT_LT((chained.matrix() - truth[t].matrix()).cwiseAbs().maxCoeff(), tol);
  }
}
