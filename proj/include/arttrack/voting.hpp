#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/kdtree.hpp"
#include "arttrack/part_frame.hpp"
#include "arttrack/ppf.hpp"
#include "arttrack/predictor.hpp"
#include "arttrack/se3.hpp"

namespace arttrack {

inline constexpr std::size_t kDefaultSphereBins = 4096;
inline constexpr std::size_t kDefaultCircleSamples = 32;
inline constexpr double kDefaultVoxelSize = 0.005;
inline constexpr double kDefaultCenterBox = 2.0;
// Two peaks farther apart than this many cells and within this mass ratio
// make a grid ambiguous.
inline constexpr double kAmbiguousSeparation = 2.0;
inline constexpr double kAmbiguousRatio = 0.95;
inline constexpr double kGoldenFraction = 0.6180339887498949;

// Orthonormal (u, w) spanning the plane orthogonal to unit d.
inline std::pair<Vec3, Vec3> orthogonal_basis(const Vec3& d) {
  const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = d.cross(helper).normalized();
  return {u, d.cross(u)};
}

// Spherical Fibonacci lattice: n near-uniform unit directions with
// z_i = 1 - (2i + 1) / n and longitude i * golden angle.
class FibonacciSphere {
 public:
  static constexpr std::size_t kNeighbors = 12;

  explicit FibonacciSphere(std::size_t n_bins) : dirs_(n_bins) {
    if (n_bins < 2) throw Error("Fibonacci sphere needs at least 2 bins");
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    const double n = static_cast<double>(n_bins);
    for (std::size_t i = 0; i < n_bins; ++i) {
      const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / n;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * static_cast<double>(i);
      dirs_[i] = Vec3(r * std::cos(phi), r * std::sin(phi), z);
    }
    const KdTree tree(dirs_);
    const std::size_t k = std::min(kNeighbors, n_bins - 1);
    n_neighbors_ = k;
    neighbors_.reserve(n_bins * k);
    for (std::size_t i = 0; i < n_bins; ++i) {
      const auto hits = tree.knn(dirs_[i], k + 1);
      std::size_t added = 0;
      for (const auto& h : hits)
        if (h.index != i && added < k) {
          neighbors_.push_back(static_cast<std::uint32_t>(h.index));
          ++added;
        }
    }
    // Coarse (z, longitude) table seeding the greedy nearest-bin walk.
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(n)));
    nz_ = 4 * side;
    nphi_ = 8 * side;
    table_.resize(nz_ * nphi_);
    for (std::size_t a = 0; a < nz_; ++a) {
      const double z = -1.0 + (static_cast<double>(a) + 0.5) * 2.0 / static_cast<double>(nz_);
      const double r = std::sqrt(1.0 - z * z);
      for (std::size_t b = 0; b < nphi_; ++b) {
        const double phi = -kPi + (static_cast<double>(b) + 0.5) * 2.0 * kPi / static_cast<double>(nphi_);
        table_[a * nphi_ + b] =
            static_cast<std::uint32_t>(tree.nearest(Vec3(r * std::cos(phi), r * std::sin(phi), z)).index);
      }
    }
  }

  std::size_t size() const { return dirs_.size(); }
  const Vec3& direction(std::size_t i) const { return dirs_[i]; }
  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return {neighbors_.data() + i * n_neighbors_, n_neighbors_};
  }

  // Typical angular spacing of neighbouring bins, sqrt(4 pi / n) radians.
  double spacing() const { return std::sqrt(4.0 * kPi / static_cast<double>(size())); }

  // Index of the lattice direction closest to unit vector d.
  std::size_t nearest(const Vec3& d) const {
    const double z = std::clamp(d.z(), -1.0, 1.0);
    auto a = static_cast<std::size_t>((z + 1.0) * 0.5 * static_cast<double>(nz_));
    auto b = static_cast<std::size_t>((std::atan2(d.y(), d.x()) + kPi) / (2.0 * kPi) * static_cast<double>(nphi_));
    a = std::min(a, nz_ - 1);
    b = std::min(b, nphi_ - 1);
    std::size_t best = table_[a * nphi_ + b];
    double best_dot = dirs_[best].dot(d);
    for (;;) {
      std::size_t next = best;
      for (std::uint32_t nb : neighbors(best)) {
        const double dot = dirs_[nb].dot(d);
        if (dot > best_dot || (dot == best_dot && nb < next)) {
          best_dot = dot;
          next = nb;
        }
      }
      if (next == best) return best;
      best = next;
    }
  }

 private:
  std::vector<Vec3> dirs_;
  std::vector<std::uint32_t> neighbors_;  // n_neighbors_ per bin
  std::size_t n_neighbors_ = 0;
  std::vector<std::uint32_t> table_;
  std::size_t nz_ = 0, nphi_ = 0;
};

struct SphereGrid {
  std::shared_ptr<const FibonacciSphere> lattice;
  std::vector<double> accumulator;

  explicit SphereGrid(std::shared_ptr<const FibonacciSphere> l)
      : lattice(std::move(l)), accumulator(lattice->size(), 0.0) {}
  explicit SphereGrid(std::size_t n_bins) : SphereGrid(std::make_shared<const FibonacciSphere>(n_bins)) {}

  std::size_t n_bins() const { return accumulator.size(); }
  void add(const Vec3& dir, double w) { accumulator[lattice->nearest(dir)] += w; }
  double total() const { return std::accumulate(accumulator.begin(), accumulator.end(), 0.0); }
  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(accumulator.begin(), accumulator.end()) - accumulator.begin());
  }
};

// Sparse voxel accumulator over an axis-aligned box. Votes outside the box are
// dropped and their mass is kept in dropped_mass.
struct CenterGrid {
  double voxel_size = kDefaultVoxelSize;
  Vec3 lower = Vec3::Constant(-1.0);
  Vec3 upper = Vec3::Constant(1.0);
  std::unordered_map<std::uint64_t, double> accumulator;
  double dropped_mass = 0.0;
  std::size_t dropped_votes = 0;

  CenterGrid() = default;
  CenterGrid(double voxel, const Vec3& lo, const Vec3& hi) : voxel_size(voxel), lower(lo), upper(hi) {
    if (!(voxel > 0.0)) throw Error("voxel size must be positive");
    if (((hi - lo).array() <= 0.0).any()) throw Error("center grid bounds are empty");
    if (((hi - lo).array() / voxel).maxCoeff() >= static_cast<double>(kAxisCells))
      throw Error("center grid has too many voxels per axis");
    accumulator.reserve(1 << 16);
  }

  static CenterGrid around(const Vec3& center, double box, double voxel) {
    const Vec3 h = Vec3::Constant(0.5 * box);
    return {voxel, center - h, center + h};
  }

  using Cell = std::array<std::int64_t, 3>;

  static std::uint64_t key(const Cell& c) {
    return static_cast<std::uint64_t>(c[0]) | (static_cast<std::uint64_t>(c[1]) << 21) |
           (static_cast<std::uint64_t>(c[2]) << 42);
  }
  static Cell cell(std::uint64_t k) {
    constexpr std::uint64_t m = (1u << 21) - 1;
    return {static_cast<std::int64_t>(k & m), static_cast<std::int64_t>((k >> 21) & m),
            static_cast<std::int64_t>((k >> 42) & m)};
  }
  Vec3 cell_center(const Cell& c) const {
    return lower + voxel_size * Vec3(static_cast<double>(c[0]) + 0.5, static_cast<double>(c[1]) + 0.5,
                                     static_cast<double>(c[2]) + 0.5);
  }
  bool contains(const Vec3& p) const { return (p.array() >= lower.array()).all() && (p.array() < upper.array()).all(); }
  Cell cell_of(const Vec3& p) const {
    const Vec3 f = (p - lower) / voxel_size;
    return {static_cast<std::int64_t>(std::floor(f.x())), static_cast<std::int64_t>(std::floor(f.y())),
            static_cast<std::int64_t>(std::floor(f.z()))};
  }

  void add(const Vec3& p, double w) {
    if (!contains(p)) {
      dropped_mass += w;
      ++dropped_votes;
      return;
    }
    accumulator[key(cell_of(p))] += w;
  }

  double mass() const {
    double s = 0.0;
    for (const auto& [k, v] : accumulator) s += v;
    return s;
  }

  double at(const Cell& c) const {
    const auto it = accumulator.find(key(c));
    return it == accumulator.end() ? 0.0 : it->second;
  }

  std::uint64_t argmax_key() const {
    std::uint64_t best = 0;
    double best_v = -1.0;
    for (const auto& [k, v] : accumulator)
      if (v > best_v || (v == best_v && k < best)) {
        best_v = v;
        best = k;
      }
    return best;
  }

 private:
  static constexpr std::int64_t kAxisCells = std::int64_t{1} << 21;
};

enum class AxisKind { Up, Right };  // e1 / e2

inline void vote_center(std::span<const PointPair> pairs, std::span<const InvariantParams> params,
                        const PointCloud& cloud, CenterGrid& grid, std::size_t n_circle_samples = kDefaultCircleSamples) {
  if (pairs.size() != params.size()) throw LengthMismatch("one parameter set per pair is required");
  if (n_circle_samples == 0) throw Error("circle sample count must be >= 1");
  std::vector<std::pair<double, double>> phase(n_circle_samples);
  for (std::size_t s = 0; s < n_circle_samples; ++s) {
    const double a = 2.0 * kPi * static_cast<double>(s) / static_cast<double>(n_circle_samples);
    phase[s] = {std::cos(a), std::sin(a)};
  }
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const PointPair& pp = pairs[n];
    const InvariantParams& pr = params[n];
    const Vec3 c = cloud.points[pp.i] + pr.mu * pp.d_hat;
    const double w = pr.weight / static_cast<double>(n_circle_samples);
    const auto [u, v] = orthogonal_basis(pp.d_hat);
    for (const auto& [cs, sn] : phase) grid.add(c + pr.nu * (cs * u + sn * v), w);
  }
}

inline void vote_orientation(std::span<const PointPair> pairs, std::span<const InvariantParams> params,
                             SphereGrid& grid, AxisKind kind, std::size_t n_cone_samples = kDefaultCircleSamples) {
  if (pairs.size() != params.size()) throw LengthMismatch("one parameter set per pair is required");
  if (n_cone_samples == 0) throw Error("cone sample count must be >= 1");
  std::vector<std::pair<double, double>> phase(n_cone_samples);
  for (std::size_t s = 0; s < n_cone_samples; ++s) {
    const double a = 2.0 * kPi * static_cast<double>(s) / static_cast<double>(n_cone_samples);
    phase[s] = {std::cos(a), std::sin(a)};
  }
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const PointPair& pp = pairs[n];
    const double c = std::clamp(kind == AxisKind::Up ? params[n].alpha : params[n].beta, -1.0, 1.0);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double w = params[n].weight / static_cast<double>(n_cone_samples);
    if (s == 0.0) {
      grid.add(c * pp.d_hat, params[n].weight);
      continue;
    }
    // Each pair starts its cone at its own golden-ratio phase so that cones
    // sharing a pair direction do not all land on the same bins.
    const auto [u0, v0] = orthogonal_basis(pp.d_hat);
    const double off = 2.0 * kPi * std::fmod(static_cast<double>(n) * kGoldenFraction, 1.0) /
                       static_cast<double>(n_cone_samples);
    const Vec3 u = std::cos(off) * u0 + std::sin(off) * v0;
    const Vec3 v = std::cos(off) * v0 - std::sin(off) * u0;
    for (const auto& [cs, sn] : phase) grid.add(c * pp.d_hat + s * (cs * u + sn * v), w);
  }
}

// Weighted componentwise median of gamma.
inline Vec3 aggregate_scale(std::span<const InvariantParams> params) {
  if (params.empty()) throw EmptyInput("no parameters to aggregate");
  Vec3 out;
  std::vector<std::pair<double, double>> vw(params.size());
  for (int a = 0; a < 3; ++a) {
    double total = 0.0;
    for (std::size_t n = 0; n < params.size(); ++n) {
      vw[n] = {params[n].gamma[a], std::max(0.0, params[n].weight)};
      total += vw[n].second;
    }
    std::sort(vw.begin(), vw.end());
    if (total <= 0.0) {
      out[a] = vw[vw.size() / 2].first;
      continue;
    }
    double acc = 0.0;
    out[a] = vw.back().first;
    for (const auto& [v, w] : vw) {
      acc += w;
      if (acc >= 0.5 * total) {
        out[a] = v;
        break;
      }
    }
  }
  return out;
}

struct PoseHypothesis {
  Vec3 center = Vec3::Zero();
  Vec3 e1 = Vec3::UnitY();
  Vec3 e2 = Vec3::UnitX();
  Vec3 scale = Vec3::Ones();
  double score = 0.0;

  PartFrame frame() const { return {center, e1, e2, scale}; }
  Pose pose() const { return frame().pose(); }
};

namespace detail {

// Peak direction refined by the mass-weighted mean of the peak bin and its
// lattice neighbours. Also returns the peak's share of total mass.
inline std::pair<Vec3, double> sphere_peak(const SphereGrid& g, const char* name) {
  const double total = g.total();
  if (!(total > 0.0)) throw EmptyInput(std::string(name) + " grid is empty");
  const FibonacciSphere& lat = *g.lattice;
  const std::size_t top = g.argmax();
  const double top_mass = g.accumulator[top];
  const double cos_sep = std::cos(kAmbiguousSeparation * lat.spacing());
  double second = 0.0;
  for (std::size_t i = 0; i < g.n_bins(); ++i)
    if (lat.direction(i).dot(lat.direction(top)) < cos_sep) second = std::max(second, g.accumulator[i]);
  if (second >= kAmbiguousRatio * top_mass)
    throw AmbiguousPeak(std::string(name) + " grid has two peaks within 5% mass");
  Vec3 sum = top_mass * lat.direction(top);
  double mass = top_mass;
  for (std::uint32_t nb : lat.neighbors(top)) {
    sum += g.accumulator[nb] * lat.direction(nb);
    mass += g.accumulator[nb];
  }
  return {sum.normalized(), mass / total};
}

}  // namespace detail

// Center: mass-weighted mean over the peak voxel's 3x3x3 neighbourhood.
// e1: refined peak of the up grid. e2: refined peak of the right grid,
// Gram-Schmidt orthogonalised against e1.
inline PoseHypothesis extract_pose(const CenterGrid& center, const SphereGrid& up, const SphereGrid& right,
                                   const Vec3& scale) {
  if (center.accumulator.empty()) throw EmptyInput("center grid is empty");
  const double total = center.mass();
  const auto top_key = center.argmax_key();
  const auto top = CenterGrid::cell(top_key);
  const double top_mass = center.accumulator.at(top_key);
  double second = 0.0;
  for (const auto& [k, v] : center.accumulator) {
    const auto c = CenterGrid::cell(k);
    const auto cheb = std::max({std::abs(c[0] - top[0]), std::abs(c[1] - top[1]), std::abs(c[2] - top[2])});
    if (static_cast<double>(cheb) > kAmbiguousSeparation) second = std::max(second, v);
  }
  if (second >= kAmbiguousRatio * top_mass) throw AmbiguousPeak("center grid has two peaks within 5% mass");

  Vec3 sum = Vec3::Zero();
  double mass = 0.0;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        const CenterGrid::Cell c{top[0] + dx, top[1] + dy, top[2] + dz};
        if (c[0] < 0 || c[1] < 0 || c[2] < 0) continue;
        const double w = center.at(c);
        sum += w * center.cell_center(c);
        mass += w;
      }

  PoseHypothesis h;
  h.center = sum / mass;
  const auto [e1, up_share] = detail::sphere_peak(up, "up");
  const auto [e2_raw, right_share] = detail::sphere_peak(right, "right");
  h.e1 = e1;
  Vec3 e2 = e2_raw - e2_raw.dot(e1) * e1;
  if (e2.norm() < 1e-9) throw AmbiguousPeak("up and right peaks are parallel");
  h.e2 = e2.normalized();
  h.scale = scale;
  h.score = (mass / total + up_share + right_share) / 3.0;
  return h;
}

// ---------------------------------------------------------------------------
// Sub-bin polish. Starting from a hypothesis, re-fits the center and both axes
// by weighted least squares over the pairs whose circle / cone passes close to
// it, so the result is no longer tied to the grid resolution.

struct PolishOptions {
  double center_tolerance = 3.0 * kDefaultVoxelSize;  // m, residual gate
  double axis_tolerance = 0.1;                        // cosine units, residual gate
  int iterations = 4;
};

inline Vec3 polish_axis(std::span<const PointPair> pairs, std::span<const InvariantParams> params, AxisKind kind,
                        const Vec3& start, const PolishOptions& opt = {}) {
  Vec3 e = start.normalized();
  for (int it = 0; it < opt.iterations; ++it) {
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    std::size_t used = 0;
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      const Vec3& d = pairs[n].d_hat;
      const double c = kind == AxisKind::Up ? params[n].alpha : params[n].beta;
      if (std::abs(d.dot(e) - c) > opt.axis_tolerance) continue;
      const double w = params[n].weight;
      a += w * d * d.transpose();
      b += w * c * d;
      ++used;
    }
    if (used < 3) return e;
    // Light pull towards the current estimate keeps poorly observed
    // directions in place.
    const double reg = 1e-6 * a.trace();
    const Vec3 x = (a + reg * Mat3::Identity()).ldlt().solve(b + reg * e);
    if (!x.allFinite() || x.norm() < 1e-12) return e;
    e = x.normalized();
  }
  return e;
}

inline Vec3 polish_center(std::span<const PointPair> pairs, std::span<const InvariantParams> params,
                          const PointCloud& cloud, const Vec3& start, const PolishOptions& opt = {}) {
  Vec3 c = start;
  for (int it = 0; it < opt.iterations; ++it) {
    Mat3 h = Mat3::Zero();
    Vec3 g = Vec3::Zero();
    std::size_t used = 0;
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      const Vec3& d = pairs[n].d_hat;
      const Vec3 rel = c - cloud.points[pairs[n].i];
      const double along = rel.dot(d);
      const Vec3 perp = rel - along * d;
      const double radius = perp.norm();
      const double r1 = along - params[n].mu;
      const double r2 = radius - params[n].nu;
      if (std::abs(r1) > opt.center_tolerance || std::abs(r2) > opt.center_tolerance) continue;
      const double w = params[n].weight;
      h += w * d * d.transpose();
      g += w * r1 * d;
      if (radius > 1e-9) {
        const Vec3 j2 = perp / radius;
        h += w * j2 * j2.transpose();
        g += w * r2 * j2;
      }
      ++used;
    }
    if (used < 3) return c;
    const double reg = 1e-9 * h.trace() + 1e-12;
    const Vec3 step = -(h + reg * Mat3::Identity()).ldlt().solve(g);
    if (!step.allFinite()) return c;
    c += step;
    if (step.norm() < 1e-10) break;
  }
  return c;
}

inline PoseHypothesis polish_pose(PoseHypothesis hyp, std::span<const PointPair> pairs,
                                  std::span<const InvariantParams> params, const PointCloud& cloud,
                                  const PolishOptions& opt = {}) {
  if (pairs.size() != params.size()) throw LengthMismatch("one parameter set per pair is required");
  hyp.center = polish_center(pairs, params, cloud, hyp.center, opt);
  const Vec3 e1 = polish_axis(pairs, params, AxisKind::Up, hyp.e1, opt);
  const Vec3 e2_raw = polish_axis(pairs, params, AxisKind::Right, hyp.e2, opt);
  const Vec3 e2 = e2_raw - e2_raw.dot(e1) * e1;
  if (e2.norm() < 1e-9) return hyp;
  hyp.e1 = e1;
  hyp.e2 = e2.normalized();
  return hyp;
}

// Increment that carries the keyframe's part frame onto the hypothesis, as a
// twist: log(pose(hyp) * pose(keyframe_frame)^-1).
inline Twist hypothesis_to_increment(const PoseHypothesis& hyp, const PartFrame& keyframe_frame) {
  return log_map(hyp.pose() * inverse(keyframe_frame.pose()));
}

// Debug dump of an accumulator in the frame file format. Sphere grids become
// directions scaled by relative mass; center grids become occupied voxel
// centers. The part id column holds the relative mass quantised to 0..255.
inline void dump_accumulator(const std::string& path, const SphereGrid& g) {
  PointCloud c;
  const double peak = g.accumulator[g.argmax()];
  for (std::size_t i = 0; i < g.n_bins(); ++i) {
    const double r = peak > 0.0 ? g.accumulator[i] / peak : 0.0;
    c.push_back(g.lattice->direction(i) * r, g.lattice->direction(i), static_cast<int>(std::lround(255.0 * r)));
  }
  write_cloud(path, c);
}

inline void dump_accumulator(const std::string& path, const CenterGrid& g) {
  PointCloud c;
  double peak = 0.0;
  std::vector<std::pair<std::uint64_t, double>> cells(g.accumulator.begin(), g.accumulator.end());
  std::sort(cells.begin(), cells.end());
  for (const auto& kv : cells) peak = std::max(peak, kv.second);
  for (const auto& [k, v] : cells)
    c.push_back(g.cell_center(CenterGrid::cell(k)), Vec3::UnitZ(), static_cast<int>(std::lround(255.0 * v / peak)));
  write_cloud(path, c);
}

}  // namespace arttrack
