#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "arttrack/canon.hpp"
#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/kinopt.hpp"
#include "arttrack/model.hpp"
#include "arttrack/ppf.hpp"
#include "arttrack/predictor.hpp"
#include "arttrack/se3.hpp"
#include "arttrack/voting.hpp"

namespace arttrack {

enum class Accumulation {
  Composed,  // T_t = T_n exp(dxi)
  Additive,  // T_t = exp(xi_n + dxi)
};

inline const char* to_string(Accumulation a) { return a == Accumulation::Composed ? "composed" : "additive"; }

inline Accumulation accumulation_from_string(const std::string& s) {
  if (s == "composed") return Accumulation::Composed;
  if (s == "additive") return Accumulation::Additive;
  throw ParseError("unknown accumulation '" + s + "'");
}

inline const char* to_string(OracleReference r) {
  return r == OracleReference::Absolute ? "absolute" : "keyframe";
}

inline OracleReference oracle_reference_from_string(const std::string& s) {
  if (s == "absolute") return OracleReference::Absolute;
  if (s == "keyframe") return OracleReference::KeyframeRelative;
  throw ParseError("unknown oracle reference '" + s + "'");
}

struct TrackerConfig {
  std::size_t n_pairs = 5000;
  std::size_t sphere_bins = kDefaultSphereBins;
  double voxel_size = kDefaultVoxelSize;
  std::size_t circle_samples = kDefaultCircleSamples;
  double center_box = kDefaultCenterBox;
  double phi = kDefaultKeyframeThreshold;
  double lambda = kDefaultPairLambda;
  KeyframeMode keyframe_mode = KeyframeMode::Dynamic;
  bool polish = true;
  Accumulation accumulation = Accumulation::Composed;
  bool kinematic = true;
  KinOptConfig kinopt;
  std::size_t min_part_points = 16;
  std::string predictor = "oracle";
  OracleReference oracle_reference = OracleReference::KeyframeRelative;
  NoiseModel noise;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_pairs < 1 || sphere_bins < 2 || circle_samples < 1 || min_part_points < 2)
      throw Error("tracker counts must be >= 1 (sphere_bins >= 2, min_part_points >= 2)");
    if (!(phi > 0.0)) throw Error("phi must be positive");
    if (!(voxel_size > 0.0) || !(center_box > voxel_size)) throw Error("voxel_size / center_box out of range");
    if (lambda < 0.0 || lambda > 1.0) throw Error("lambda must lie in [0, 1]");
    if (kinopt.max_iterations < 0 || kinopt.kin_weight < 0.0) throw Error("invalid optimizer settings");
    if (noise.sigma_trans < 0.0 || noise.sigma_dir < 0.0 || !(noise.length_scale > 0.0) ||
        noise.frame_correlation < 0.0 || noise.frame_correlation > 1.0)
      throw Error("invalid noise settings");
    if (predictor != "oracle") throw Error("unknown predictor '" + predictor + "'");
  }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ParseError("expected a boolean, got '" + v + "'");
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Applies one `key = value` setting; unknown keys are rejected.
inline void set_config_value(TrackerConfig& c, const std::string& key, const std::string& value) {
  try {
    if (key == "n_pairs") c.n_pairs = std::stoul(value);
    else if (key == "sphere_bins") c.sphere_bins = std::stoul(value);
    else if (key == "voxel_size") c.voxel_size = std::stod(value);
    else if (key == "circle_samples") c.circle_samples = std::stoul(value);
    else if (key == "center_box") c.center_box = std::stod(value);
    else if (key == "phi") c.phi = std::stod(value);
    else if (key == "lambda") c.lambda = std::stod(value);
    else if (key == "keyframe_mode") c.keyframe_mode = keyframe_mode_from_string(value);
    else if (key == "polish") c.polish = detail::parse_bool(value);
    else if (key == "accumulation") c.accumulation = accumulation_from_string(value);
    else if (key == "kinematic") c.kinematic = detail::parse_bool(value);
    else if (key == "kin_weight") c.kinopt.kin_weight = std::stod(value);
    else if (key == "geo_residual") c.kinopt.geo = geo_residual_from_string(value);
    else if (key == "max_iterations") c.kinopt.max_iterations = std::stoi(value);
    else if (key == "energy_tol") c.kinopt.energy_tol = std::stod(value);
    else if (key == "step_tol") c.kinopt.step_tol = std::stod(value);
    else if (key == "min_part_points") c.min_part_points = std::stoul(value);
    else if (key == "predictor") c.predictor = value;
    else if (key == "oracle_reference") c.oracle_reference = oracle_reference_from_string(value);
    else if (key == "sigma_trans") c.noise.sigma_trans = std::stod(value);
    else if (key == "sigma_dir") c.noise.sigma_dir = std::stod(value);
    else if (key == "extrapolation_gain") c.noise.extrapolation_gain = std::stod(value);
    else if (key == "length_scale") c.noise.length_scale = std::stod(value);
    else if (key == "ambiguity_gain") c.noise.ambiguity_gain = std::stod(value);
    else if (key == "frame_correlation") c.noise.frame_correlation = std::stod(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else throw ParseError("unknown config key '" + key + "'");
  } catch (const std::logic_error&) {
    throw ParseError("bad value '" + value + "' for config key '" + key + "'");
  }
}

inline TrackerConfig parse_config(std::istream& in, TrackerConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

inline TrackerConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path);
  return parse_config(in);
}

inline void write_config(std::ostream& out, const TrackerConfig& c) {
  const auto f = format_double;
  out << "n_pairs = " << c.n_pairs << "\nsphere_bins = " << c.sphere_bins << "\nvoxel_size = " << f(c.voxel_size)
      << "\ncircle_samples = " << c.circle_samples << "\ncenter_box = " << f(c.center_box) << "\nphi = " << f(c.phi)
      << "\nlambda = " << f(c.lambda) << "\nkeyframe_mode = " << to_string(c.keyframe_mode)
      << "\npolish = " << (c.polish ? "true" : "false") << "\naccumulation = " << to_string(c.accumulation) << "\nkinematic = " << (c.kinematic ? "true" : "false")
      << "\nkin_weight = " << f(c.kinopt.kin_weight) << "\ngeo_residual = " << to_string(c.kinopt.geo)
      << "\nmax_iterations = " << c.kinopt.max_iterations << "\nenergy_tol = " << f(c.kinopt.energy_tol)
      << "\nstep_tol = " << f(c.kinopt.step_tol) << "\nmin_part_points = " << c.min_part_points
      << "\npredictor = " << c.predictor << "\noracle_reference = " << to_string(c.oracle_reference)
      << "\nsigma_trans = " << f(c.noise.sigma_trans) << "\nsigma_dir = " << f(c.noise.sigma_dir)
      << "\nextrapolation_gain = " << f(c.noise.extrapolation_gain) << "\nlength_scale = " << f(c.noise.length_scale)
      << "\nambiguity_gain = " << f(c.noise.ambiguity_gain)
      << "\nframe_correlation = " << f(c.noise.frame_correlation) << "\nseed = " << c.seed << '\n';
}

// ---------------------------------------------------------------------------

struct TrackerState {
  std::vector<Pose> poses;
  std::vector<Vec3> scales;
  std::vector<Twist> twists;           // xi_t = xi_n + dxi_t
  std::vector<Twist> keyframe_twists;  // xi_n, log of the keyframe poses
  std::vector<Pose> increments;        // exp(dxi_t), relative to the keyframe
  SegmentState segment;
  std::size_t frame = 0;
  std::vector<double> seconds;
};

struct FrameResult {
  std::size_t frame = 0;
  std::vector<Pose> poses;
  std::vector<Vec3> scales;
  double energy = 0.0;
  bool keyframe_updated = false;
  double seconds = 0.0;
  std::vector<bool> carried;  // part fell back to its previous pose
  std::vector<double> scores;
  std::vector<Pose> coarse;  // voting poses before kinematic refinement
};

class TrackingAborted : public Error {
 public:
  TrackingAborted(std::size_t frame, std::vector<FrameResult> partial, const std::string& why)
      : Error("TrackingAborted: frame " + std::to_string(frame) + ": " + why),
        frame_index(frame),
        results(std::move(partial)) {}
  std::size_t frame_index;
  std::vector<FrameResult> results;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b) ^ c);
}

namespace detail {

inline Twist safe_log(const Pose& p, const Twist& fallback) {
  try {
    return log_map(p);
  } catch (const AngleNearPi&) {
    return fallback;
  }
}

}  // namespace detail

class Tracker {
 public:
  Tracker(const ArticulatedModel& model, std::shared_ptr<const Predictor> predictor, TrackerConfig config)
      : model_(model),
        predictor_(std::move(predictor)),
        cfg_(std::move(config)),
        lattice_(std::make_shared<const FibonacciSphere>(cfg_.sphere_bins)) {
    cfg_.validate();
    model_.validate();
    if (!predictor_) throw Error("tracker needs a predictor");
  }

  const TrackerConfig& config() const { return cfg_; }
  const ArticulatedModel& model() const { return model_; }

  TrackerState init(const PointCloud& first, const std::vector<Pose>& initial) const {
    check_labels(first);
    if (initial.size() != model_.num_parts()) throw LengthMismatch("need one initial pose per part");
    TrackerState s;
    s.poses = initial;
    for (const Part& p : model_.parts) s.scales.push_back(p.scale());
    for (const Pose& p : initial) s.twists.push_back(log_map(p));
    s.keyframe_twists = s.twists;
    s.increments.assign(initial.size(), Pose::identity());
    s.segment.keyframe = Keyframe::from_poses(0, 0, initial, first);
    s.frame = 0;
    return s;
  }

  // Result record for the initial frame.
  FrameResult initial_result(const TrackerState& s, const PointCloud& first) const {
    FrameResult r;
    r.frame = s.frame;
    r.poses = s.poses;
    r.coarse = s.poses;
    r.scales = s.scales;
    r.energy = first.empty() ? 0.0 : energy(s.poses, first);
    r.carried.assign(s.poses.size(), false);
    r.scores.assign(s.poses.size(), 1.0);
    return r;
  }

  std::pair<TrackerState, FrameResult> step(TrackerState s, const PointCloud& frame) const {
    const auto t0 = std::chrono::steady_clock::now();
    if (frame.empty()) throw EmptyCloud("frame " + std::to_string(s.frame + 1) + " is empty");
    check_labels(frame);
    const std::size_t t = s.frame + 1;
    const std::size_t parts = model_.num_parts();
    const Keyframe& key = s.segment.keyframe;

    FrameResult r;
    r.frame = t;
    r.carried.assign(parts, false);
    r.scores.assign(parts, 0.0);
    std::vector<Pose> coarse = s.poses;
    std::vector<Vec3> scales = s.scales;
    std::vector<PointCloud> observed(parts);

    for (std::size_t k = 0; k < parts; ++k) {
      observed[k] = frame.part(static_cast<int>(k));
      if (observed[k].size() < cfg_.min_part_points) {
        r.carried[k] = true;
        continue;
      }
      try {
        const Pose increment = vote_increment(s, observed[k], t, k, scales[k], r.scores[k]);
        const Pose& key_pose = key.pose(k);
        Twist dxi;
        bool have_log = true;
        try {
          dxi = log_map(increment);
        } catch (const AngleNearPi&) {
          have_log = false;
        }
        if (cfg_.accumulation == Accumulation::Additive && have_log) {
          coarse[k] = exp_map(s.keyframe_twists[k] + dxi);
        } else {
          coarse[k] = key_pose * increment;
        }
        s.increments[k] = increment;
        s.twists[k] = have_log ? s.keyframe_twists[k] + dxi : detail::safe_log(coarse[k], s.twists[k]);
      } catch (const AmbiguousPeak&) {
        r.carried[k] = true;
      } catch (const EmptyInput&) {
        r.carried[k] = true;
      } catch (const TooFewPoints&) {
        r.carried[k] = true;
      }
    }

    std::vector<Pose> refined = coarse;
    if (cfg_.kinematic && parts > 1) refined = optimize(coarse, observed, model_, cfg_.kinopt).poses;

    r.coarse = coarse;
    r.poses = refined;
    r.scales = scales;
    r.energy = energy(refined, frame);

    auto upd = maybe_update_keyframe(std::move(s.segment), r.energy, t, frame, refined, cfg_.phi, cfg_.keyframe_mode);
    s.segment = std::move(upd.state);
    r.keyframe_updated = upd.updated;
    s.poses = refined;
    s.scales = scales;
    if (upd.updated) {
      for (std::size_t k = 0; k < parts; ++k) {
        s.keyframe_twists[k] = detail::safe_log(refined[k], s.twists[k]);
        s.twists[k] = s.keyframe_twists[k];
        s.increments[k] = Pose::identity();
      }
    } else {
      // Keep the bookkeeping consistent with the refined pose.
      for (std::size_t k = 0; k < parts; ++k) s.increments[k] = inverse(s.segment.keyframe.pose(k)) * refined[k];
    }
    s.frame = t;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.seconds.push_back(r.seconds);
    return {std::move(s), std::move(r)};
  }

  // Tracks every frame; frames[0] initialises the tracker and is reported
  // with the initial poses.
  std::vector<FrameResult> run(const std::vector<PointCloud>& frames, const std::vector<Pose>& initial) const {
    std::vector<FrameResult> out;
    if (frames.empty()) return out;
    TrackerState s;
    try {
      s = init(frames[0], initial);
      out.push_back(initial_result(s, frames[0]));
    } catch (const Error& e) {
      throw TrackingAborted(0, std::move(out), e.what());
    }
    for (std::size_t i = 1; i < frames.size(); ++i) {
      try {
        auto [next, res] = step(std::move(s), frames[i]);
        s = std::move(next);
        out.push_back(std::move(res));
      } catch (const Error& e) {
        throw TrackingAborted(i, std::move(out), e.what());
      }
    }
    return out;
  }

  // (D_C + D_H) / |frame| between the frame and the model's prediction of it.
  // With canonical correspondences the prediction is each observed point's
  // canonical counterpart under the estimated pose; otherwise it is the whole
  // posed model.
  double energy(const std::vector<Pose>& poses, const PointCloud& frame) const {
    PointCloud predicted;
    if (frame.has_correspondence()) {
      predicted.reserve(frame.size());
      for (std::size_t i = 0; i < frame.size(); ++i) {
        const auto k = static_cast<std::size_t>(frame.part_labels[i]);
        const PointCloud& can = model_.parts[k].canonical;
        const auto c = static_cast<std::size_t>(frame.canonical_index[i]);
        if (c >= can.size()) throw MissingCorrespondence("canonical index out of range");
        predicted.push_back(apply(poses[k], can.points[c]), poses[k].rotation * can.normals[c], frame.part_labels[i]);
      }
    } else {
      predicted = model_.posed_cloud(poses);
    }
    return segment_energy(predicted, frame, ChamferMode::Sum);
  }

 private:
  void check_labels(const PointCloud& frame) const {
    for (int l : frame.part_labels)
      if (l < 0 || static_cast<std::size_t>(l) >= model_.num_parts())
        throw LabelMismatch("frame carries part label " + std::to_string(l) + " but the model has " +
                            std::to_string(model_.num_parts()) + " parts");
  }

  // Votes the part's pose in the keyframe's quasi-canonical space and returns
  // the increment relative to the keyframe pose.
  Pose vote_increment(const TrackerState& s, const PointCloud& part_cloud, std::size_t t, std::size_t k,
                      Vec3& scale, double& score) const {
    const Keyframe& key = s.segment.keyframe;
    const PointCloud q = transformed(part_cloud, key.transform[k]);
    const std::uint64_t seed = mix_seed(cfg_.seed, t, k);
    const auto pairs = sample_pairs(q, cfg_.n_pairs, seed, cfg_.lambda);

    PredictionContext ctx;
    ctx.frame = t;
    ctx.keyframe_frame = key.frame;
    ctx.part = static_cast<int>(k);
    ctx.keyframe_pose = key.pose(k);
    ctx.seed = mix_seed(cfg_.seed, t, k, 1);
    const auto params = predictor_->predict(pairs, q, ctx);

    const PartFrame canon = model_.parts[k].frame();
    const Vec3 expected = apply(key.transform[k] * s.poses[k], canon.center);
    CenterGrid center = CenterGrid::around(expected, cfg_.center_box, cfg_.voxel_size);
    SphereGrid up(lattice_), right(lattice_);
    vote_center(pairs, params, q, center, cfg_.circle_samples);
    vote_orientation(pairs, params, up, AxisKind::Up, cfg_.circle_samples);
    vote_orientation(pairs, params, right, AxisKind::Right, cfg_.circle_samples);
    scale = aggregate_scale(params);
    PoseHypothesis hyp = extract_pose(center, up, right, scale);
    if (cfg_.polish) {
      PolishOptions opt;
      opt.center_tolerance = 3.0 * cfg_.voxel_size;
      opt.axis_tolerance = 2.0 * lattice_->spacing();
      hyp = polish_pose(hyp, pairs, params, q, opt);
    }
    score = hyp.score;
    return hyp.pose() * inverse(canon.pose());
  }

  ArticulatedModel model_;
  std::shared_ptr<const Predictor> predictor_;
  TrackerConfig cfg_;
  std::shared_ptr<const FibonacciSphere> lattice_;
};

// ---------------------------------------------------------------------------
// Result file: one record per frame per part,
//   frame part r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz sx sy sz energy keyframe seconds

inline void write_results(std::ostream& out, const std::vector<FrameResult>& results, bool with_timing = false) {
  const auto f = format_double;
  out << "# frame part r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz sx sy sz energy keyframe seconds\n";
  for (const FrameResult& r : results) {
    for (std::size_t k = 0; k < r.poses.size(); ++k) {
      const Pose& p = r.poses[k];
      out << r.frame << ' ' << k;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out << ' ' << f(p.rotation(i, j));
      for (int i = 0; i < 3; ++i) out << ' ' << f(p.translation[i]);
      const Vec3 sc = k < r.scales.size() ? r.scales[k] : Vec3::Ones();
      for (int i = 0; i < 3; ++i) out << ' ' << f(sc[i]);
      out << ' ' << f(r.energy) << ' ' << (r.keyframe_updated ? 1 : 0) << ' '
          << f(with_timing ? r.seconds : 0.0) << '\n';
    }
  }
}

inline void write_results(const std::string& path, const std::vector<FrameResult>& results,
                          bool with_timing = false) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_results(out, results, with_timing);
}

inline std::vector<FrameResult> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::map<std::size_t, std::map<std::size_t, std::pair<Pose, Vec3>>> records;
  std::map<std::size_t, std::tuple<double, bool, double>> meta;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::size_t frame = 0, part = 0;
    if (!(ss >> frame)) continue;
    Pose p;
    Vec3 sc;
    double energy = 0.0, seconds = 0.0;
    int kf = 0;
    bool ok = static_cast<bool>(ss >> part);
    for (int i = 0; i < 3 && ok; ++i)
      for (int j = 0; j < 3 && ok; ++j) ok = static_cast<bool>(ss >> p.rotation(i, j));
    for (int i = 0; i < 3 && ok; ++i) ok = static_cast<bool>(ss >> p.translation[i]);
    for (int i = 0; i < 3 && ok; ++i) ok = static_cast<bool>(ss >> sc[i]);
    ok = ok && static_cast<bool>(ss >> energy >> kf >> seconds);
    std::string extra;
    if (!ok || (ss >> extra)) throw ParseError(path + ":" + std::to_string(lineno) + ": malformed result record");
    if (!records[frame].emplace(part, std::make_pair(p, sc)).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate record");
    meta[frame] = {energy, kf != 0, seconds};
  }
  std::vector<FrameResult> out;
  std::size_t parts = 0;
  for (const auto& [frame, per_part] : records) {
    FrameResult r;
    r.frame = frame;
    if (per_part.rbegin()->first + 1 != per_part.size())
      throw ParseError(path + ": frame " + std::to_string(frame) + " has missing parts");
    if (parts == 0) parts = per_part.size();
    if (per_part.size() != parts) throw ParseError(path + ": part count changes at frame " + std::to_string(frame));
    for (const auto& [k, ps] : per_part) {
      r.poses.push_back(ps.first);
      r.scales.push_back(ps.second);
    }
    std::tie(r.energy, r.keyframe_updated, r.seconds) = meta[frame];
    r.carried.assign(parts, false);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace arttrack
