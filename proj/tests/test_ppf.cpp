#include <gtest/gtest.h>

#include <random>

#include "arttrack/ppf.hpp"
#include "oracles.hpp"

using namespace arttrack;

namespace {

PointCloud random_oriented_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({u(rng), u(rng), u(rng)}, oracle::random_unit(rng), 0);
  return c;
}

}  // namespace

TEST(PairWeight, HandValues) {
  EXPECT_DOUBLE_EQ(pair_weight(Vec3::UnitX(), Vec3::UnitY(), 0.5), 1.0);
  EXPECT_DOUBLE_EQ(pair_weight(Vec3::UnitX(), Vec3::UnitY(), 0.9), 1.0);
  EXPECT_DOUBLE_EQ(pair_weight(Vec3::UnitZ(), Vec3::UnitZ(), 0.5), 0.5);
  EXPECT_DOUBLE_EQ(pair_weight(Vec3::UnitZ(), -Vec3::UnitZ(), 0.5), 0.5);
  const Vec3 n60(std::cos(kPi / 3), std::sin(kPi / 3), 0.0);
  EXPECT_NEAR(pair_weight(Vec3::UnitX(), n60, 0.5), 0.75, 1e-15);
  EXPECT_DOUBLE_EQ(pair_weight(Vec3::UnitZ(), Vec3::UnitZ(), 0.0), 1.0);
}

TEST(PairWeight, RangeSymmetryAndMaximum) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = oracle::random_unit(rng), b = oracle::random_unit(rng);
    const double w = pair_weight(a, b, 0.5);
    EXPECT_GE(w, 0.5);
    EXPECT_LE(w, 1.0);
    EXPECT_EQ(w, pair_weight(b, a, 0.5));
  }
}

TEST(PairWeight, FlatPatchBelowCorner) {
  const double flat = pair_weight(Vec3::UnitZ(), Vec3(0.01, 0, 1).normalized(), 0.5);
  const double corner = pair_weight(Vec3::UnitZ(), Vec3::UnitX(), 0.5);
  EXPECT_LT(flat, corner);
}

TEST(SamplePairs, TwoPointCloud) {
  PointCloud c;
  c.push_back({0, 0, 0}, Vec3::UnitZ(), 0);
  c.push_back({1, 0, 0}, Vec3::UnitZ(), 0);
  const auto pairs = sample_pairs(c, 1, 5);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_NE(pairs[0].i, pairs[0].j);
  EXPECT_LT(std::max(pairs[0].i, pairs[0].j), 2u);
  EXPECT_NEAR(std::abs(pairs[0].d_hat.x()), 1.0, 1e-15);
}

TEST(SamplePairs, DeterministicPerSeed) {
  const PointCloud c = random_oriented_cloud(100, 32);
  const auto a = sample_pairs(c, 500, 77), b = sample_pairs(c, 500, 77), d = sample_pairs(c, 500, 78);
  bool differs = false;
  for (std::size_t n = 0; n < a.size(); ++n) {
    EXPECT_EQ(a[n].i, b[n].i);
    EXPECT_EQ(a[n].j, b[n].j);
    EXPECT_EQ(a[n].weight, b[n].weight);
    differs |= a[n].i != d[n].i || a[n].j != d[n].j;
  }
  EXPECT_TRUE(differs);
}

TEST(SamplePairs, InvariantsHold) {
  const PointCloud c = random_oriented_cloud(60, 33);
  for (const PointPair& p : sample_pairs(c, 2000, 3, 0.5)) {
    ASSERT_NE(p.i, p.j);
    ASSERT_NEAR(p.d_hat.norm(), 1.0, 1e-9);
    ASSERT_EQ(p.weight, 1.0 - 0.5 * std::abs(c.normals[p.i].dot(c.normals[p.j])));
  }
}

TEST(SamplePairs, UniformIndexFrequency) {
  const PointCloud c = random_oriented_cloud(100, 34);
  const std::size_t n = 500000;  // 10^6 index draws
  const auto pairs = sample_pairs(c, n, 35);
  std::vector<double> count(100, 0.0);
  for (const PointPair& p : pairs) {
    count[p.i] += 1.0;
    count[p.j] += 1.0;
  }
  const double expected = 2.0 * static_cast<double>(n) / 100.0;
  double chi2 = 0.0;
  for (double k : count) {
    EXPECT_NEAR(k / (2.0 * static_cast<double>(n)), 0.01, 0.002);
    chi2 += (k - expected) * (k - expected) / expected;
  }
  // 99.9th percentile of chi-square with 99 degrees of freedom.
  EXPECT_LT(chi2, 148.2);
}

TEST(SamplePairs, Errors) {
  PointCloud one;
  one.push_back({0, 0, 0}, Vec3::UnitZ(), 0);
  EXPECT_THROW(sample_pairs(one, 1, 0), TooFewPoints);
  PointCloud same;
  same.push_back({0, 0, 0}, Vec3::UnitZ(), 0);
  same.push_back({0, 0, 0}, Vec3::UnitZ(), 0);
  EXPECT_THROW(sample_pairs(same, 1, 0), DegeneratePair);
}

TEST(PairFeature, AxisAligned) {
  PointCloud c;
  c.push_back({0, 0, 0}, Vec3::UnitZ(), 0);
  c.push_back({1, 0, 0}, Vec3::UnitZ(), 0);
  const PairFeature f = pair_feature(c, make_pair(c, 0, 1));
  EXPECT_NEAR(f[0], 1.0, 1e-15);
  EXPECT_NEAR(f[1], kPi / 2, 1e-15);
  EXPECT_NEAR(f[2], kPi / 2, 1e-15);
  EXPECT_NEAR(f[3], 0.0, 1e-15);
}

TEST(PairFeature, RigidInvariance) {
  std::mt19937_64 rng(36);
  const PointCloud c = random_oriented_cloud(40, 37);
  const auto pairs = sample_pairs(c, 50, 38);
  for (int t = 0; t < 100; ++t) {
    const PointCloud moved = transformed(c, oracle::random_pose(rng));
    for (const PointPair& p : pairs) {
      const PairFeature a = pair_feature(c, p), b = pair_feature(moved, p);
      ASSERT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
      ASSERT_GE(a[0], 0.0);
      for (int k = 1; k < 4; ++k) {
        ASSERT_GE(a[k], 0.0);
        ASSERT_LE(a[k], kPi);
      }
    }
  }
}

TEST(PairFeature, CoincidentPointsThrow) {
  PointCloud c;
  c.push_back({0.5, 0.5, 0.5}, Vec3::UnitZ(), 0);
  c.push_back({0.5, 0.5, 0.5}, Vec3::UnitX(), 0);
  EXPECT_THROW(pair_feature(c, PointPair{0, 1, Vec3::UnitX(), 1.0}), DegeneratePair);
  EXPECT_THROW(make_pair(c, 0, 1), DegeneratePair);
}
