#pragma once

#include <cmath>

#include "arttrack/se3.hpp"

namespace arttrack {

// Per-part reference frame: center o, up axis e1, right axis e2 and a per-axis
// scale. The canonical convention is e1 = +y, e2 = +x, so the frame's pose is
// the rotation with columns [e2, e1, e2 x e1] placed at the center.
struct PartFrame {
  Vec3 center = Vec3::Zero();
  Vec3 e1 = Vec3::UnitY();
  Vec3 e2 = Vec3::UnitX();
  Vec3 scale = Vec3::Ones();

  static PartFrame canonical(const Vec3& center, const Vec3& scale = Vec3::Ones()) {
    return {center, Vec3::UnitY(), Vec3::UnitX(), scale};
  }

  // From a pose whose rotation columns are [e2, e1, e3].
  static PartFrame from_pose(const Pose& p, const Vec3& scale = Vec3::Ones()) {
    return {p.translation, p.rotation.col(1), p.rotation.col(0), scale};
  }

  Pose pose() const {
    Mat3 r;
    r.col(0) = e2;
    r.col(1) = e1;
    r.col(2) = e2.cross(e1);
    return {r, center};
  }

  bool is_valid(double tol = 1e-9) const {
    return std::abs(e1.dot(e2)) < tol && std::abs(e1.norm() - 1.0) < tol && std::abs(e2.norm() - 1.0) < tol &&
           (scale.array() > 0.0).all();
  }
};

inline PartFrame transformed(const PartFrame& f, const Pose& p) {
  return {apply(p, f.center), p.rotation * f.e1, p.rotation * f.e2, f.scale};
}

}  // namespace arttrack
