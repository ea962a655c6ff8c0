#pragma once

// Reference implementations used only by the tests. None of them call into
// the library's closed forms.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "arttrack/se3.hpp"

namespace oracle {

using arttrack::Mat3;
using arttrack::Mat4;
using arttrack::Vec3;

// Matrix exponential by scaling and squaring with a truncated Taylor series.
inline Mat4 expm(const Mat4& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  if (norm > 0.5) s = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Mat4 b = a / std::ldexp(1.0, s);
  Mat4 term = Mat4::Identity(), sum = Mat4::Identity();
  for (int k = 1; k <= 20; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

// Matrix logarithm by inverse scaling and squaring: Denman-Beavers square
// roots until the matrix is near identity, then the Gregory series
// log(X) = 2 atanh((X - I)(X + I)^-1).
inline Mat4 logm(const Mat4& m) {
  Mat4 x = m;
  int s = 0;
  while ((x - Mat4::Identity()).norm() > 0.05 && s < 40) {
    Mat4 y = x, z = Mat4::Identity();
    for (int it = 0; it < 60; ++it) {
      const Mat4 yi = y.inverse(), zi = z.inverse();
      y = 0.5 * (y + zi);
      z = 0.5 * (z + yi);
    }
    x = y;
    ++s;
  }
  const Mat4 u = (x - Mat4::Identity()) * (x + Mat4::Identity()).inverse();
  const Mat4 u2 = u * u;
  Mat4 term = u, sum = Mat4::Zero();
  for (int k = 0; k < 40; ++k) {
    sum += term / static_cast<double>(2 * k + 1);
    term = term * u2;
  }
  return std::ldexp(2.0, s) * sum;
}

inline Mat4 hat4(const arttrack::Twist& xi) {
  Mat4 m = Mat4::Zero();
  m(0, 1) = -xi.omega.z();
  m(0, 2) = xi.omega.y();
  m(1, 0) = xi.omega.z();
  m(1, 2) = -xi.omega.x();
  m(2, 0) = -xi.omega.y();
  m(2, 1) = xi.omega.x();
  m.topRightCorner<3, 1>() = xi.vee;
  return m;
}

inline arttrack::Twist vee4(const Mat4& m) {
  return {Vec3(m(2, 1), m(0, 2), m(1, 0)), m.topRightCorner<3, 1>()};
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do v = Vec3(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-6);
  return v.normalized();
}

inline arttrack::Twist random_twist(std::mt19937_64& rng, double max_angle, double max_trans = 2.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double angle = max_angle * u(rng);
  return {random_unit(rng) * angle, random_unit(rng) * (max_trans * u(rng))};
}

inline arttrack::Pose random_pose(std::mt19937_64& rng, double max_trans = 2.0) {
  return arttrack::exp_map(random_twist(rng, arttrack::kPi - 0.1, max_trans));
}

// O(n^2) nearest-neighbour distances.
inline std::vector<double> brute_nn(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  std::vector<double> out;
  for (const Vec3& p : from) {
    double best = 1e300;
    for (const Vec3& q : to) best = std::min(best, (p - q).norm());
    out.push_back(best);
  }
  return out;
}

}  // namespace oracle
