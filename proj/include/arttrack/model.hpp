#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/part_frame.hpp"
#include "arttrack/se3.hpp"

namespace arttrack {

enum class JointType { Revolute, Prismatic };

inline const char* to_string(JointType t) { return t == JointType::Revolute ? "revolute" : "prismatic"; }

inline JointType joint_type_from_string(const std::string& s) {
  if (s == "revolute") return JointType::Revolute;
  if (s == "prismatic") return JointType::Prismatic;
  throw ParseError("unknown joint type '" + s + "'");
}

// Joint axis given in the shared canonical (rest) frame of the object.
struct Joint {
  JointType type = JointType::Revolute;
  Vec3 axis_point = Vec3::Zero();
  Vec3 axis_dir = Vec3::UnitX();
  int parent = 0;
  int child = 1;
  double lower = -kPi;
  double upper = kPi;

  // Child motion relative to the parent for joint value `q` (rad or m).
  Pose motion(double q) const {
    if (type == JointType::Prismatic) return Pose::from_translation(q * axis_dir);
    const Mat3 r = axis_angle(axis_dir, q);
    return {r, axis_point - r * axis_point};
  }
};

struct Part {
  std::string name;
  PointCloud canonical;  // in the object's canonical frame, labels = part index
  std::string cloud_path;
  Vec3 center = Vec3::Zero();   // canonical box center
  Vec3 extents = Vec3::Ones();  // canonical axis-aligned box size

  // Ground-truth scale: extents over the largest extent.
  Vec3 scale() const { return extents / extents.maxCoeff(); }
  PartFrame frame() const { return PartFrame::canonical(center, scale()); }
};

struct ArticulatedModel {
  std::string name;
  std::vector<Part> parts;
  std::vector<Joint> joints;

  std::size_t num_parts() const { return parts.size(); }

  // Joint graph must be a tree spanning every part.
  void validate() const {
    const int k = static_cast<int>(parts.size());
    if (k == 0) throw InvalidModel("model has no parts");
    if (joints.size() != parts.size() - 1)
      throw InvalidModel("a tree over " + std::to_string(k) + " parts needs " + std::to_string(k - 1) + " joints");
    std::vector<int> root(parts.size());
    for (int i = 0; i < k; ++i) root[i] = i;
    std::function<int(int)> find = [&](int x) { return root[x] == x ? x : root[x] = find(root[x]); };
    for (const Joint& j : joints) {
      if (j.parent < 0 || j.child < 0 || j.parent >= k || j.child >= k || j.parent == j.child)
        throw InvalidModel("joint references invalid parts");
      if (std::abs(j.axis_dir.norm() - 1.0) > 1e-9) throw InvalidModel("joint axis is not unit length");
      const int a = find(j.parent), b = find(j.child);
      if (a == b) throw InvalidModel("joint graph has a cycle");
      root[a] = b;
    }
  }

  // Joints ordered so that every parent is placed before its children.
  std::vector<const Joint*> topological_joints(int root_part = 0) const {
    std::vector<const Joint*> order;
    std::vector<bool> placed(parts.size(), false);
    placed[root_part] = true;
    bool progress = true;
    while (progress && order.size() < joints.size()) {
      progress = false;
      for (const Joint& j : joints) {
        if (placed[j.parent] && !placed[j.child]) {
          placed[j.child] = true;
          order.push_back(&j);
          progress = true;
        }
      }
    }
    if (order.size() != joints.size()) throw InvalidModel("joints must point away from part 0");
    return order;
  }

  // Per-part poses for a base pose and one value per joint (joint order).
  std::vector<Pose> forward_kinematics(const Pose& base, const std::vector<double>& joint_values) const {
    if (joint_values.size() != joints.size()) throw Error("expected one value per joint");
    std::vector<Pose> poses(parts.size(), base);
    for (const Joint* j : topological_joints()) {
      const std::size_t ji = static_cast<std::size_t>(j - joints.data());
      poses[j->child] = poses[j->parent] * j->motion(joint_values[ji]);
    }
    return poses;
  }

  // Union of all canonical part clouds placed by per-part poses.
  PointCloud posed_cloud(const std::vector<Pose>& poses) const {
    PointCloud out;
    for (std::size_t k = 0; k < parts.size(); ++k) out.append(transformed(parts[k].canonical, poses[k]));
    return out;
  }

  // Diagonal of the canonical bounding box of the whole object.
  double diagonal() const {
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    for (const Part& p : parts) {
      lo = lo.cwiseMin(p.center - 0.5 * p.extents);
      hi = hi.cwiseMax(p.center + 0.5 * p.extents);
    }
    return (hi - lo).norm();
  }
};

// ---------------------------------------------------------------------------
// Model manifest. Whitespace-separated records, '#' comments; cloud paths are
// relative to the manifest's directory.
//
//   model <name>
//   frame_convention e1=+y e2=+x
//   part <index> <name> <cloud_path> <cx> <cy> <cz> <ex> <ey> <ez>
//   joint <revolute|prismatic> <parent> <child> <qx> <qy> <qz> <ux> <uy> <uz> <lower> <upper>

inline void write_model(const std::string& path, const ArticulatedModel& model) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(path).parent_path();
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "# articulated model manifest\n";
  out << "model " << model.name << '\n';
  out << "frame_convention e1=+y e2=+x\n";
  auto f = format_double;
  for (std::size_t k = 0; k < model.parts.size(); ++k) {
    const Part& p = model.parts[k];
    std::string rel = p.cloud_path.empty() ? "part_" + std::to_string(k) + ".txt" : p.cloud_path;
    write_cloud((dir / rel).string(), p.canonical);
    out << "part " << k << ' ' << p.name << ' ' << rel << ' ' << f(p.center.x()) << ' ' << f(p.center.y()) << ' '
        << f(p.center.z()) << ' ' << f(p.extents.x()) << ' ' << f(p.extents.y()) << ' ' << f(p.extents.z()) << '\n';
  }
  for (const Joint& j : model.joints) {
    out << "joint " << to_string(j.type) << ' ' << j.parent << ' ' << j.child << ' ' << f(j.axis_point.x()) << ' '
        << f(j.axis_point.y()) << ' ' << f(j.axis_point.z()) << ' ' << f(j.axis_dir.x()) << ' ' << f(j.axis_dir.y())
        << ' ' << f(j.axis_dir.z()) << ' ' << f(j.lower) << ' ' << f(j.upper) << '\n';
  }
}

inline ArticulatedModel read_model(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  const fs::path dir = fs::path(path).parent_path();
  ArticulatedModel model;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (tag == "model") {
      ss >> model.name;
    } else if (tag == "frame_convention") {
      std::string a, b;
      ss >> a >> b;
      if (a != "e1=+y" || b != "e2=+x") throw ParseError(where + ": unsupported frame convention");
    } else if (tag == "part") {
      std::size_t idx = 0;
      Part p;
      if (!(ss >> idx >> p.name >> p.cloud_path >> p.center.x() >> p.center.y() >> p.center.z() >> p.extents.x() >>
            p.extents.y() >> p.extents.z()))
        throw ParseError(where + ": malformed part record");
      if (idx != model.parts.size()) throw ParseError(where + ": parts must be listed in index order");
      p.canonical = read_cloud((dir / p.cloud_path).string());
      model.parts.push_back(std::move(p));
    } else if (tag == "joint") {
      std::string type;
      Joint j;
      if (!(ss >> type >> j.parent >> j.child >> j.axis_point.x() >> j.axis_point.y() >> j.axis_point.z() >>
            j.axis_dir.x() >> j.axis_dir.y() >> j.axis_dir.z() >> j.lower >> j.upper))
        throw ParseError(where + ": malformed joint record");
      j.type = joint_type_from_string(type);
      j.axis_dir.normalize();
      model.joints.push_back(j);
    } else {
      throw ParseError(where + ": unknown record '" + tag + "'");
    }
  }
  model.validate();
  return model;
}

}  // namespace arttrack
