#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/part_frame.hpp"
#include "arttrack/ppf.hpp"
#include "arttrack/se3.hpp"

namespace arttrack {

// Per-pair voting payload. (mu, nu) place the part center on a circle around
// the pair direction, alpha / beta are the cosines between the pair direction
// and the up / right axes, gamma is the part's per-axis scale.
struct InvariantParams {
  double mu = 0.0;
  double nu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  Vec3 gamma = Vec3::Ones();
  double weight = 1.0;

  bool in_range() const {
    return nu >= 0.0 && std::abs(alpha) <= 1.0 && std::abs(beta) <= 1.0 && (gamma.array() > 0.0).all() &&
           std::isfinite(mu) && std::isfinite(weight);
  }
};

inline InvariantParams oracle_params(const PointPair& pair, const PointCloud& cloud, const PartFrame& truth) {
  const Vec3 d = cloud.points[pair.j] - cloud.points[pair.i];
  if (d.norm() < kDegeneratePair) throw DegeneratePair("pair distance below 1e-9");
  const Vec3 dh = d.normalized();
  const Vec3 to_center = truth.center - cloud.points[pair.i];
  InvariantParams p;
  p.mu = to_center.dot(dh);
  p.nu = (to_center - p.mu * dh).norm();
  p.alpha = std::clamp(truth.e1.dot(dh), -1.0, 1.0);
  p.beta = std::clamp(truth.e2.dot(dh), -1.0, 1.0);
  p.gamma = truth.scale;
  p.weight = pair.weight;
  return p;
}

// Gaussian noise on mu, nu (clamped >= 0), alpha, beta (clamped to [-1, 1]);
// gamma is scaled by exp(N(0, sigma_dir)) per component.
template <class Rng>
InvariantParams perturb_params(InvariantParams p, double sigma_trans, double sigma_dir, Rng& rng) {
  if (sigma_trans > 0.0) {
    std::normal_distribution<double> n(0.0, sigma_trans);
    p.mu += n(rng);
    p.nu = std::max(0.0, p.nu + n(rng));
  }
  if (sigma_dir > 0.0) {
    std::normal_distribution<double> n(0.0, sigma_dir);
    p.alpha = std::clamp(p.alpha + n(rng), -1.0, 1.0);
    p.beta = std::clamp(p.beta + n(rng), -1.0, 1.0);
    for (int a = 0; a < 3; ++a) p.gamma[a] *= std::exp(n(rng));
  }
  return p;
}

inline InvariantParams perturb_params(const InvariantParams& p, double sigma_trans, double sigma_dir,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return perturb_params(p, sigma_trans, sigma_dir, rng);
}

// ---------------------------------------------------------------------------
// Predictor seam. The tracker hands over the quasi-canonical cloud of one part
// and its sampled pairs; a predictor returns one InvariantParams per pair.

struct PredictionContext {
  std::size_t frame = 0;
  std::size_t keyframe_frame = 0;
  int part = 0;
  Pose keyframe_pose;  // estimated part pose at the keyframe
  std::uint64_t seed = 0;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<InvariantParams> predict(std::span<const PointPair> pairs, const PointCloud& cloud,
                                               const PredictionContext& ctx) const = 0;
};

// Ground-truth per-part poses, indexed [frame][part].
struct GroundTruth {
  std::vector<std::vector<Pose>> poses;
  std::vector<Vec3> scales;

  std::size_t num_frames() const { return poses.size(); }
};

// What the oracle treats as the part's true frame in quasi-canonical space.
enum class OracleReference {
  // Pose of the observed cloud itself: K T_t F_c. Keyframe errors are undone.
  Absolute,
  // Keyframe frame carried by the true motion since the keyframe:
  // K (T_t T_n^-1) K^-1 F_c. Estimation error at the keyframe persists, as it
  // does for any estimator of relative motion.
  KeyframeRelative,
};

struct NoiseModel {
  double sigma_trans = 0.0;  // m, on mu and nu
  double sigma_dir = 0.0;    // on alpha, beta and log gamma
  // Sigma grows by (1 + gain * m), m = rotation angle (rad) plus translation
  // over length_scale of the true motion since the keyframe.
  double extrapolation_gain = 0.0;
  double length_scale = 1.0;
  // Sigma grows by (1 + gain * |cos|) between the pair's surface normals;
  // pairs on a common plane carry less information.
  double ambiguity_gain = 0.0;
  // Fraction of the variance shared by all pairs of a part in one frame. The
  // shared part displaces the encoded frame itself by a rotation of
  // sqrt(rho) * sigma_dir rad and a translation of sqrt(rho) * sigma_trans m
  // per axis; the remainder stays independent per pair.
  double frame_correlation = 0.0;

  bool is_zero() const { return sigma_trans == 0.0 && sigma_dir == 0.0; }
};

class OraclePredictor : public Predictor {
 public:
  // canonical_normals[k] are part k's canonical normals; when a cloud carries
  // canonical correspondences they replace the observed normals in the
  // ambiguity term.
  OraclePredictor(GroundTruth truth, std::vector<PartFrame> canonical_frames, NoiseModel noise = {},
                  OracleReference reference = OracleReference::KeyframeRelative,
                  std::vector<std::vector<Vec3>> canonical_normals = {})
      : truth_(std::move(truth)),
        frames_(std::move(canonical_frames)),
        noise_(noise),
        reference_(reference),
        canonical_normals_(std::move(canonical_normals)) {}

  const NoiseModel& noise() const { return noise_; }
  OracleReference reference() const { return reference_; }

  // The frame the oracle encodes, in the quasi-canonical space of ctx.
  PartFrame target_frame(const PredictionContext& ctx) const {
    if (ctx.frame >= truth_.num_frames() || ctx.keyframe_frame >= truth_.num_frames())
      throw LengthMismatch("no ground truth for frame " + std::to_string(ctx.frame));
    if (ctx.part < 0 || static_cast<std::size_t>(ctx.part) >= frames_.size())
      throw UnknownPart("part " + std::to_string(ctx.part));
    const auto k = static_cast<std::size_t>(ctx.part);
    const Pose& t_now = truth_.poses[ctx.frame][k];
    const Pose key_inv = inverse(ctx.keyframe_pose);
    Pose placement;
    if (reference_ == OracleReference::Absolute) {
      placement = key_inv * t_now;
    } else {
      const Pose& t_key = truth_.poses[ctx.keyframe_frame][k];
      placement = key_inv * t_now * inverse(t_key) * ctx.keyframe_pose;
    }
    PartFrame f = transformed(frames_[k], placement);
    if (k < truth_.scales.size()) f.scale = truth_.scales[k];
    return f;
  }

  // Shared per-frame displacement of the encoded frame (identity without
  // correlated noise).
  Pose frame_perturbation(const PredictionContext& ctx) const {
    const double rho = std::clamp(noise_.frame_correlation, 0.0, 1.0);
    if (rho == 0.0 || noise_.is_zero()) return Pose::identity();
    const double f = std::sqrt(rho) * extrapolation(ctx);
    std::mt19937_64 rng(ctx.seed ^ 0x6a09e667f3bcc909ULL);
    std::normal_distribution<double> g(0.0, 1.0);
    const Vec3 w(g(rng), g(rng), g(rng));
    const Vec3 v(g(rng), g(rng), g(rng));
    return {exp_map(Twist(f * noise_.sigma_dir * w, Vec3::Zero())).rotation, f * noise_.sigma_trans * v};
  }

  std::vector<InvariantParams> predict(std::span<const PointPair> pairs, const PointCloud& cloud,
                                       const PredictionContext& ctx) const override {
    PartFrame target = target_frame(ctx);
    if (!noise_.is_zero() && noise_.frame_correlation > 0.0) {
      const Pose shifted = target.pose() * frame_perturbation(ctx);
      target = PartFrame::from_pose(shifted, target.scale);
    }
    std::vector<InvariantParams> out;
    out.reserve(pairs.size());
    for (const PointPair& pp : pairs) out.push_back(oracle_params(pp, cloud, target));
    if (noise_.is_zero()) return out;

    const auto k = static_cast<std::size_t>(ctx.part);
    const double independent = std::sqrt(1.0 - std::clamp(noise_.frame_correlation, 0.0, 1.0));
    const double base = extrapolation(ctx) * independent;
    const bool use_canonical = cloud.has_correspondence() && k < canonical_normals_.size();
    std::mt19937_64 rng(ctx.seed);
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      double scale = base;
      if (noise_.ambiguity_gain > 0.0) {
        const PointPair& pp = pairs[n];
        double c;
        if (use_canonical) {
          const auto& cn = canonical_normals_[k];
          c = std::abs(cn[static_cast<std::size_t>(cloud.canonical_index[pp.i])].dot(
              cn[static_cast<std::size_t>(cloud.canonical_index[pp.j])]));
        } else {
          c = std::abs(cloud.normals[pp.i].dot(cloud.normals[pp.j]));
        }
        scale *= 1.0 + noise_.ambiguity_gain * c;
      }
      out[n] = perturb_params(out[n], noise_.sigma_trans * scale, noise_.sigma_dir * scale, rng);
    }
    return out;
  }

  // Noise multiplier from the true motion since the keyframe.
  double extrapolation(const PredictionContext& ctx) const {
    if (noise_.extrapolation_gain <= 0.0) return 1.0;
    const auto k = static_cast<std::size_t>(ctx.part);
    const Pose motion = inverse(truth_.poses[ctx.keyframe_frame][k]) * truth_.poses[ctx.frame][k];
    const double m = rotation_angle(motion.rotation) + motion.translation.norm() / noise_.length_scale;
    return 1.0 + noise_.extrapolation_gain * m;
  }

 private:
  GroundTruth truth_;
  std::vector<PartFrame> frames_;
  NoiseModel noise_;
  OracleReference reference_;
  std::vector<std::vector<Vec3>> canonical_normals_;
};

}  // namespace arttrack
