#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/se3.hpp"

namespace arttrack {

inline constexpr double kDefaultPairLambda = 0.5;
inline constexpr double kDegeneratePair = 1e-9;

struct PointPair {
  std::size_t i = 0;
  std::size_t j = 0;
  Vec3 d_hat = Vec3::UnitX();  // (p_j - p_i) / |p_j - p_i|
  double weight = 1.0;
};

// (|p_i - p_j|, angle(n_i, d), angle(n_j, d), angle(n_i, n_j)).
using PairFeature = Eigen::Vector4d;

// Down-weights pairs whose normals are close to parallel: 1 - lambda |cos|.
inline double pair_weight(const Vec3& n_i, const Vec3& n_j, double lambda = kDefaultPairLambda) {
  return 1.0 - lambda * std::abs(n_i.dot(n_j));
}

inline double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

inline PointPair make_pair(const PointCloud& cloud, std::size_t i, std::size_t j,
                           double lambda = kDefaultPairLambda) {
  const Vec3 d = cloud.points[j] - cloud.points[i];
  const double len = d.norm();
  if (i == j || len < kDegeneratePair)
    throw DegeneratePair("points " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
  return {i, j, d / len, pair_weight(cloud.normals[i], cloud.normals[j], lambda)};
}

// Ordered pairs i != j drawn uniformly with replacement. Coincident points are
// redrawn; a cloud made only of coincident points raises DegeneratePair.
inline std::vector<PointPair> sample_pairs(const PointCloud& cloud, std::size_t n_pairs, std::uint64_t seed,
                                           double lambda = kDefaultPairLambda) {
  const std::size_t n = cloud.size();
  if (n < 2) throw TooFewPoints("pair sampling needs at least 2 points, got " + std::to_string(n));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  std::vector<PointPair> pairs;
  pairs.reserve(n_pairs);
  std::size_t rejected = 0;
  while (pairs.size() < n_pairs) {
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    if ((cloud.points[j] - cloud.points[i]).norm() < kDegeneratePair) {
      if (++rejected > 100 * (n_pairs + 1)) throw DegeneratePair("cloud has no distinct points");
      continue;
    }
    pairs.push_back(make_pair(cloud, i, j, lambda));
  }
  return pairs;
}

inline PairFeature pair_feature(const PointCloud& cloud, const PointPair& pair) {
  const Vec3 d = cloud.points[pair.j] - cloud.points[pair.i];
  const double len = d.norm();
  if (len < kDegeneratePair) throw DegeneratePair("pair distance below 1e-9");
  const Vec3 dh = d / len;
  const Vec3& ni = cloud.normals[pair.i];
  const Vec3& nj = cloud.normals[pair.j];
  return {len, angle_between(ni, dh), angle_between(nj, dh), angle_between(ni, nj)};
}

}  // namespace arttrack
