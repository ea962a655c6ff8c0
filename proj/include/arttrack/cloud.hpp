#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "arttrack/error.hpp"
#include "arttrack/kdtree.hpp"
#include "arttrack/se3.hpp"

namespace arttrack {

// N oriented points with part labels. canonical_index is optional: when
// present (same length as points) entry n is the index of the point's source
// in its part's canonical cloud.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<int> part_labels;
  std::vector<int> canonical_index;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_correspondence() const { return !points.empty() && canonical_index.size() == points.size(); }

  void reserve(std::size_t n) {
    points.reserve(n);
    normals.reserve(n);
    part_labels.reserve(n);
  }

  void push_back(const Vec3& p, const Vec3& n, int label, int canonical = -1) {
    points.push_back(p);
    normals.push_back(n);
    part_labels.push_back(label);
    if (canonical >= 0) canonical_index.push_back(canonical);
  }

  // Throws Error when lengths disagree or a normal is not unit length.
  void validate(double normal_tol = 1e-6) const {
    if (normals.size() != points.size() || part_labels.size() != points.size())
      throw Error("point cloud arrays have different lengths");
    if (!canonical_index.empty() && canonical_index.size() != points.size())
      throw Error("canonical index array has the wrong length");
    for (const Vec3& n : normals)
      if (std::abs(n.norm() - 1.0) > normal_tol) throw Error("normal is not unit length");
  }

  PointCloud subset(const std::vector<std::size_t>& idx) const {
    PointCloud out;
    out.reserve(idx.size());
    const bool corr = has_correspondence();
    for (std::size_t i : idx) {
      out.points.push_back(points[i]);
      out.normals.push_back(normals[i]);
      out.part_labels.push_back(part_labels[i]);
      if (corr) out.canonical_index.push_back(canonical_index[i]);
    }
    return out;
  }

  PointCloud part(int label) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i)
      if (part_labels[i] == label) idx.push_back(i);
    return subset(idx);
  }

  void append(const PointCloud& o) {
    const bool corr = (empty() || has_correspondence()) && o.has_correspondence();
    points.insert(points.end(), o.points.begin(), o.points.end());
    normals.insert(normals.end(), o.normals.begin(), o.normals.end());
    part_labels.insert(part_labels.end(), o.part_labels.begin(), o.part_labels.end());
    if (corr)
      canonical_index.insert(canonical_index.end(), o.canonical_index.begin(), o.canonical_index.end());
    else
      canonical_index.clear();
  }
};

inline PointCloud transformed(const PointCloud& c, const Pose& p) {
  PointCloud out = c;
  for (std::size_t i = 0; i < c.size(); ++i) {
    out.points[i] = apply(p, c.points[i]);
    out.normals[i] = p.rotation * c.normals[i];
  }
  return out;
}

inline Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  return pts.empty() ? c : Vec3(c / static_cast<double>(pts.size()));
}

// PCA normals from the k-nearest-neighbour covariance, flipped so that
// n . (viewpoint - p) >= 0.
inline PointCloud estimate_normals(const PointCloud& cloud, std::size_t k_neighbors = 16,
                                   const Vec3& viewpoint = Vec3::Zero()) {
  if (cloud.size() < k_neighbors || k_neighbors < 3)
    throw TooFewPoints("need at least " + std::to_string(std::max<std::size_t>(k_neighbors, 3)) +
                       " points, got " + std::to_string(cloud.size()));
  PointCloud out = cloud;
  out.normals.resize(cloud.size());
  const KdTree tree(cloud.points);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto hits = tree.knn(cloud.points[i], k_neighbors);
    Vec3 mean = Vec3::Zero();
    for (const auto& h : hits) mean += cloud.points[h.index];
    mean /= static_cast<double>(hits.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& h : hits) {
      const Vec3 d = cloud.points[h.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

// Farthest-point sampling. The first pick is the point farthest from the
// centroid (lowest index on ties), which makes the result a pure function of
// the input.
inline PointCloud downsample(const PointCloud& cloud, std::size_t n_target) {
  if (n_target == 0) throw Error("downsample target must be >= 1");
  if (n_target >= cloud.size()) return cloud;
  const std::size_t n = cloud.size();
  const Vec3 c = centroid(cloud.points);
  std::size_t current = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (cloud.points[i] - c).squaredNorm();
    if (d > best) {
      best = d;
      current = i;
    }
  }
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picked;
  picked.reserve(n_target);
  for (std::size_t s = 0; s < n_target; ++s) {
    picked.push_back(current);
    const Vec3& p = cloud.points[current];
    std::size_t next = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (cloud.points[i] - p).squaredNorm();
      if (d < dist[i]) dist[i] = d;
      if (dist[i] > far) {
        far = dist[i];
        next = i;
      }
    }
    current = next;
  }
  return cloud.subset(picked);
}

namespace detail {

// Nearest-neighbour distances from every point of `from` to the set `to`.
inline std::vector<double> nn_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  const KdTree tree(to);
  std::vector<double> d(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) d[i] = std::sqrt(tree.nearest(from[i]).dist2);
  return d;
}

inline void require_nonempty(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw EmptyCloud("set distance needs two non-empty clouds");
}

}  // namespace detail

enum class ChamferMode {
  Mean,  // mean_a min_b + mean_b min_a
  Sum,   // sum_a min_b + sum_b min_a
};

inline double chamfer(const PointCloud& a, const PointCloud& b, ChamferMode mode = ChamferMode::Mean) {
  detail::require_nonempty(a, b);
  const auto ab = detail::nn_distances(a.points, b.points);
  const auto ba = detail::nn_distances(b.points, a.points);
  double sa = 0.0, sb = 0.0;
  for (double d : ab) sa += d;
  for (double d : ba) sb += d;
  if (mode == ChamferMode::Sum) return sa + sb;
  return sa / static_cast<double>(ab.size()) + sb / static_cast<double>(ba.size());
}

struct CloudDistances {
  double chamfer = 0.0;
  double hausdorff = 0.0;
};

// Both distances from a single pair of nearest-neighbour passes.
inline CloudDistances cloud_distances(const PointCloud& a, const PointCloud& b, ChamferMode mode = ChamferMode::Mean) {
  detail::require_nonempty(a, b);
  const auto ab = detail::nn_distances(a.points, b.points);
  const auto ba = detail::nn_distances(b.points, a.points);
  double sa = 0.0, sb = 0.0;
  for (double d : ab) sa += d;
  for (double d : ba) sb += d;
  CloudDistances out;
  out.chamfer = mode == ChamferMode::Sum
                    ? sa + sb
                    : sa / static_cast<double>(ab.size()) + sb / static_cast<double>(ba.size());
  out.hausdorff = std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
  return out;
}

inline double hausdorff(const PointCloud& a, const PointCloud& b) {
  detail::require_nonempty(a, b);
  const auto ab = detail::nn_distances(a.points, b.points);
  const auto ba = detail::nn_distances(b.points, a.points);
  return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
}

// ---------------------------------------------------------------------------
// Frame file: one point per line, "x y z nx ny nz part_id", '#' comments.
// Canonical correspondences, when present, live in a sidecar file with the
// same stem and extension ".idx" holding one integer per line.

inline std::string correspondence_path(const std::string& cloud_path) {
  const auto dot = cloud_path.find_last_of('.');
  const auto slash = cloud_path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return cloud_path + ".idx";
  return cloud_path.substr(0, dot) + ".idx";
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);  // no "-0"
  return buf;
}

inline void write_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "# x y z nx ny nz part_id\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const Vec3& n = cloud.normals[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << ' '
        << format_double(n.x()) << ' ' << format_double(n.y()) << ' ' << format_double(n.z()) << ' '
        << cloud.part_labels[i] << '\n';
  }
  if (cloud.has_correspondence()) {
    std::ofstream idx(correspondence_path(path));
    if (!idx) throw Error("cannot write " + correspondence_path(path));
    for (int c : cloud.canonical_index) idx << c << '\n';
  }
}

inline PointCloud read_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double v[6];
    int label = 0;
    if (!(ss >> v[0])) continue;  // blank line
    if (!(ss >> v[1] >> v[2] >> v[3] >> v[4] >> v[5] >> label))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 7 fields");
    Vec3 n(v[3], v[4], v[5]);
    const double len = n.norm();
    if (len > 0.0) n /= len;
    cloud.push_back({v[0], v[1], v[2]}, n, label);
  }
  std::ifstream idx(correspondence_path(path));
  if (idx) {
    int c = 0;
    while (idx >> c) cloud.canonical_index.push_back(c);
    if (cloud.canonical_index.size() != cloud.size())
      throw ParseError(correspondence_path(path) + ": expected " + std::to_string(cloud.size()) + " indices");
  }
  return cloud;
}

}  // namespace arttrack
