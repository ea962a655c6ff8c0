#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>

#include "arttrack/error.hpp"

namespace arttrack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kPi = std::numbers::pi;

// Below this rotation angle the closed forms are replaced by their series.
inline constexpr double kSmallAngle = 1e-8;
// log_map refuses rotations this close to pi (the log is not unique there).
inline constexpr double kNearPi = 1e-6;
// compose() re-projects onto SO(3) once R^T R drifts past this.
inline constexpr double kOrthoRepair = 1e-12;

// Coefficients that lose precision to cancellation below this angle are
// evaluated from their Taylor series instead.
inline constexpr double kSeriesAngle = 1e-3;

namespace detail {

// (1 - cos t) / t^2 written as 2 sin^2(t/2) / t^2, which has no cancellation.
inline double one_minus_cos_over_t2(double t) {
  const double s = std::sin(0.5 * t) / t;
  return 2.0 * s * s;
}

// (t - sin t) / t^3.
inline double t_minus_sin_over_t3(double t) {
  const double t2 = t * t;
  if (t < kSeriesAngle) return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  return (t - std::sin(t)) / (t2 * t);
}

}  // namespace detail

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

// Element of se(3): angular part omega (axis * angle, radians) and linear
// part vee (meters).
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 vee = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& w, const Vec3& v) : omega(w), vee(v) {}

  static Twist zero() { return {}; }
  static Twist from_vector(const Vec6& x) { return {x.head<3>(), x.tail<3>()}; }

  Vec6 vector() const {
    Vec6 x;
    x << omega, vee;
    return x;
  }

  // 4x4 matrix [[omega]_x v; 0 0].
  Mat4 matrix() const {
    Mat4 m = Mat4::Zero();
    m.topLeftCorner<3, 3>() = hat(omega);
    m.topRightCorner<3, 1>() = vee;
    return m;
  }

  bool in_canonical_range() const { return omega.norm() < kPi; }

  Twist operator+(const Twist& o) const { return {omega + o.omega, vee + o.vee}; }
  Twist operator-(const Twist& o) const { return {omega - o.omega, vee - o.vee}; }
  Twist operator-() const { return {-omega, -vee}; }
  Twist operator*(double s) const { return {omega * s, vee * s}; }
  friend Twist operator*(double s, const Twist& t) { return t * s; }
};

// Rigid transform x -> R x + t.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }
  static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Pose from_rotation(const Mat3& r) { return {r, Vec3::Zero()}; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  }

  bool is_valid(double tol = 1e-9) const {
    return rotation.allFinite() && translation.allFinite() &&
           orthonormality_error() < tol && std::abs(rotation.determinant() - 1.0) < tol;
  }
};

// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
inline Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

// Rotation by `angle` about unit `axis`.
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

// Left Jacobian of SO(3), V in exp([w v]) = [exp(w), V v].
inline Mat3 left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) return Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
  return Mat3::Identity() + detail::one_minus_cos_over_t2(theta) * w + detail::t_minus_sin_over_t3(theta) * w * w;
}

inline Mat3 left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * w + (1.0 / 12.0) * w * w;
  const double t2 = theta * theta;
  double k;
  if (theta < kSeriesAngle) {
    k = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    k = (1.0 - half * std::cos(half) / std::sin(half)) / t2;
  }
  return Mat3::Identity() - 0.5 * w + k * w * w;
}

inline Pose exp_map(const Twist& xi) {
  const double theta = xi.omega.norm();
  const Mat3 w = hat(xi.omega);
  Mat3 r;
  if (theta < kSmallAngle) {
    r = Mat3::Identity() + w + 0.5 * w * w;
  } else {
    const double a = std::sin(theta) / theta;
    r = Mat3::Identity() + a * w + detail::one_minus_cos_over_t2(theta) * w * w;
  }
  return {r, left_jacobian(xi.omega) * xi.vee};
}

// Rotation angle in [0, pi], computed from both the symmetric and the
// antisymmetric part so it stays accurate near 0 and near pi.
inline double rotation_angle(const Mat3& r) {
  const double c = 0.5 * (r.trace() - 1.0);
  const double s = 0.5 * vee(r - r.transpose()).norm();
  return std::atan2(s, c);
}

// Throws AngleNearPi when the rotation angle is within kNearPi of pi.
inline Twist log_map(const Pose& pose) {
  const Mat3& r = pose.rotation;
  const double theta = rotation_angle(r);
  if (theta > kPi - kNearPi) {
    throw AngleNearPi("rotation angle " + std::to_string(theta) + " rad is within 1e-6 of pi");
  }
  const Vec3 axis_sin = 0.5 * vee(r - r.transpose());  // sin(theta) * axis
  Vec3 omega;
  if (theta < kSmallAngle) {
    omega = axis_sin;
  } else {
    omega = axis_sin * (theta / std::sin(theta));
  }
  return {omega, left_jacobian_inverse(omega) * pose.translation};
}

inline Pose inverse(const Pose& p) {
  const Mat3 rt = p.rotation.transpose();
  return {rt, -(rt * p.translation)};
}

inline Vec3 apply(const Pose& p, const Vec3& x) { return p.rotation * x + p.translation; }

inline Pose compose(const Pose& a, const Pose& b) {
  Pose out{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
  if (out.orthonormality_error() > kOrthoRepair) out.rotation = project_to_so3(out.rotation);
  return out;
}

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

// Additive accumulation xi_t = xi_{t-1} + dxi. Only equals composition of the
// exponentials when the two twists commute.
inline Twist accumulate(const Twist& prev, const Twist& inc) { return prev + inc; }

}  // namespace arttrack
