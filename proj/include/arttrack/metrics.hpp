#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "arttrack/error.hpp"
#include "arttrack/model.hpp"
#include "arttrack/se3.hpp"
#include "arttrack/tracker.hpp"

namespace arttrack {

// Geodesic angle between the rotations, in degrees.
inline double rotation_error(const Pose& a, const Pose& b) {
  return rotation_angle(a.rotation.transpose() * b.rotation) * 180.0 / kPi;
}

inline double translation_error(const Pose& a, const Pose& b) { return (a.translation - b.translation).norm(); }

struct IouEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo IoU of two oriented boxes. Each box has dimensions
// max(extents) * scale, is centred at `center` in its local frame and is
// placed in the world by its pose.
inline IouEstimate iou3d(const Pose& pose_a, const Vec3& scale_a, const Pose& pose_b, const Vec3& scale_b,
                         const Vec3& extents, std::size_t n_mc, std::uint64_t seed,
                         const Vec3& center = Vec3::Zero()) {
  if ((extents.array() <= 0.0).any()) throw Error("box extents must be positive");
  if (n_mc == 0) throw Error("iou3d needs at least one sample");
  const double len = extents.maxCoeff();
  const Vec3 half_a = 0.5 * len * scale_a.cwiseAbs();
  const Vec3 half_b = 0.5 * len * scale_b.cwiseAbs();
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (int c = 0; c < 8; ++c) {
    const Vec3 s((c & 1) ? 1.0 : -1.0, (c & 2) ? 1.0 : -1.0, (c & 4) ? 1.0 : -1.0);
    const Vec3 pa = apply(pose_a, center + s.cwiseProduct(half_a));
    const Vec3 pb = apply(pose_b, center + s.cwiseProduct(half_b));
    lo = lo.cwiseMin(pa).cwiseMin(pb);
    hi = hi.cwiseMax(pa).cwiseMax(pb);
  }
  const Pose inv_a = inverse(pose_a), inv_b = inverse(pose_b);
  auto inside = [&](const Pose& inv, const Vec3& half, const Vec3& p) {
    return ((apply(inv, p) - center).cwiseAbs().array() <= half.array()).all();
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t n_inter = 0, n_union = 0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const Vec3 p = lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(hi - lo);
    const bool a = inside(inv_a, half_a, p), b = inside(inv_b, half_b, p);
    n_inter += (a && b) ? 1 : 0;
    n_union += (a || b) ? 1 : 0;
  }
  IouEstimate e;
  if (n_union == 0) return e;
  e.value = static_cast<double>(n_inter) / static_cast<double>(n_union);
  e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(n_union));
  return e;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

struct CumulativeError {
  double final_rotation = 0.0;     // deg
  double final_translation = 0.0;  // m
  double composite = 0.0;          // final_rotation + final_translation / diagonal
  std::vector<double> series;      // composite at every frame
};

// Per part: rotation error (deg) plus translation error over the object
// diagonal, reported at the last frame and as a per-frame series.
inline std::vector<CumulativeError> cumulative_error(const std::vector<FrameResult>& results,
                                                     const std::vector<FrameResult>& truth, double diagonal) {
  if (results.size() != truth.size())
    throw LengthMismatch("results cover " + std::to_string(results.size()) + " frames, truth " +
                         std::to_string(truth.size()));
  if (!(diagonal > 0.0)) throw Error("object diagonal must be positive");
  std::vector<CumulativeError> out;
  if (results.empty()) return out;
  const std::size_t parts = truth.front().poses.size();
  out.resize(parts);
  for (std::size_t t = 0; t < results.size(); ++t) {
    if (results[t].poses.size() != parts || truth[t].poses.size() != parts)
      throw LengthMismatch("part count differs at frame " + std::to_string(t));
    for (std::size_t k = 0; k < parts; ++k) {
      const double r = rotation_error(results[t].poses[k], truth[t].poses[k]);
      const double d = translation_error(results[t].poses[k], truth[t].poses[k]);
      out[k].series.push_back(r + d / diagonal);
      out[k].final_rotation = r;
      out[k].final_translation = d;
      out[k].composite = r + d / diagonal;
    }
  }
  return out;
}

struct PartReport {
  std::vector<double> rotation;     // deg per frame
  std::vector<double> translation;  // m per frame
  std::vector<double> iou;          // fraction per frame
  double median_rotation = 0.0;
  double median_translation = 0.0;
  double median_iou = 0.0;
  CumulativeError cumulative;
};

struct EvalReport {
  std::vector<PartReport> parts;
  double mean_seconds = 0.0;
  std::size_t frames = 0;
};

inline constexpr std::size_t kDefaultIouSamples = 4000;

// Medians run over every frame after the initial one (frame 0 is given).
inline EvalReport evaluate(const std::vector<FrameResult>& results, const std::vector<FrameResult>& truth,
                           const ArticulatedModel& model, std::size_t n_mc = kDefaultIouSamples,
                           std::uint64_t seed = 0) {
  EvalReport rep;
  const auto cum = cumulative_error(results, truth, model.diagonal());
  rep.frames = results.size();
  if (results.empty()) return rep;
  const std::size_t parts = model.num_parts();
  if (truth.front().poses.size() != parts) throw LengthMismatch("truth part count differs from the model");
  rep.parts.resize(parts);
  const std::size_t first = results.size() > 1 ? 1 : 0;
  double secs = 0.0;
  for (std::size_t t = first; t < results.size(); ++t) {
    secs += results[t].seconds;
    for (std::size_t k = 0; k < parts; ++k) {
      PartReport& pr = rep.parts[k];
      const Pose& a = results[t].poses[k];
      const Pose& b = truth[t].poses[k];
      pr.rotation.push_back(rotation_error(a, b));
      pr.translation.push_back(translation_error(a, b));
      const Vec3 sa = k < results[t].scales.size() ? results[t].scales[k] : Vec3::Ones();
      const Vec3 sb = k < truth[t].scales.size() ? truth[t].scales[k] : model.parts[k].scale();
      pr.iou.push_back(
          iou3d(a, sa, b, sb, model.parts[k].extents, n_mc, mix_seed(seed, t, k), model.parts[k].center).value);
    }
  }
  rep.mean_seconds = secs / static_cast<double>(results.size() - first);
  for (std::size_t k = 0; k < parts; ++k) {
    PartReport& pr = rep.parts[k];
    pr.median_rotation = median(pr.rotation);
    pr.median_translation = median(pr.translation);
    pr.median_iou = median(pr.iou);
    pr.cumulative = cum[k];
  }
  return rep;
}

inline void print_report(std::ostream& out, const EvalReport& rep) {
  char buf[256];
  out << "part  median_rot_deg  median_trans_m  median_iou_pct  final_rot_deg  final_trans_m  cumulative\n";
  for (std::size_t k = 0; k < rep.parts.size(); ++k) {
    const PartReport& p = rep.parts[k];
    std::snprintf(buf, sizeof buf, "%4zu  %14.4f  %14.5f  %14.2f  %13.4f  %13.5f  %10.4f\n", k, p.median_rotation,
                  p.median_translation, 100.0 * p.median_iou, p.cumulative.final_rotation,
                  p.cumulative.final_translation, p.cumulative.composite);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "frames %zu, mean seconds/frame %.4f\n", rep.frames, rep.mean_seconds);
  out << buf;
  for (std::size_t k = 0; k < rep.parts.size(); ++k) {
    const PartReport& p = rep.parts[k];
    out << "METRIC part=" << k << " median_rotation_deg=" << format_double(p.median_rotation)
        << " median_translation_m=" << format_double(p.median_translation)
        << " median_iou=" << format_double(p.median_iou)
        << " final_rotation_deg=" << format_double(p.cumulative.final_rotation)
        << " final_translation_m=" << format_double(p.cumulative.final_translation)
        << " cumulative=" << format_double(p.cumulative.composite) << '\n';
  }
  out << "METRIC frames=" << rep.frames << " mean_seconds=" << format_double(rep.mean_seconds) << '\n';
}

}  // namespace arttrack
