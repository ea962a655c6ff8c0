#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/model.hpp"
#include "arttrack/predictor.hpp"
#include "arttrack/se3.hpp"
#include "arttrack/tracker.hpp"

namespace arttrack {

inline constexpr std::size_t kDefaultPointsPerPart = 2000;
inline constexpr std::size_t kDefaultFramePoints = 3072;

inline const std::vector<std::string>& template_names() {
  static const std::vector<std::string> names{"laptop", "dishwasher", "drawer", "scissors", "eyeglasses"};
  return names;
}

// Uniform samples on the surface of an axis-aligned box, faces chosen by area.
inline PointCloud sample_box_surface(const Vec3& center, const Vec3& extents, std::size_t n, int label,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vec3 h = 0.5 * extents;
  const std::array<double, 3> area{extents.y() * extents.z(), extents.x() * extents.z(), extents.x() * extents.y()};
  std::discrete_distribution<int> face({area[0], area[0], area[1], area[1], area[2], area[2]});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int f = face(rng);
    const int axis = f / 2;
    const double sign = (f % 2 == 0) ? 1.0 : -1.0;
    Vec3 p(u(rng) * h.x(), u(rng) * h.y(), u(rng) * h.z());
    p[axis] = sign * h[axis];
    Vec3 nrm = Vec3::Zero();
    nrm[axis] = sign;
    out.push_back(center + p, nrm, label);
  }
  return out;
}

namespace detail {

struct BoxSpec {
  std::string name;
  Vec3 center;
  Vec3 extents;
};

inline ArticulatedModel assemble(const std::string& name, const std::vector<BoxSpec>& boxes,
                                 std::vector<Joint> joints, std::uint64_t seed, std::size_t points_per_part) {
  ArticulatedModel m;
  m.name = name;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    Part p;
    p.name = boxes[k].name;
    p.center = boxes[k].center;
    p.extents = boxes[k].extents;
    p.cloud_path = "part_" + std::to_string(k) + ".txt";
    p.canonical = sample_box_surface(p.center, p.extents, points_per_part, static_cast<int>(k),
                                     mix_seed(seed, 0x5eed, k));
    m.parts.push_back(std::move(p));
  }
  m.joints = std::move(joints);
  m.validate();
  return m;
}

}  // namespace detail

// Box-built articulated objects in metres; every named dimension is jittered
// by a factor in [0.85, 1.15] drawn from `seed`.
inline ArticulatedModel make_model(const std::string& templ, std::uint64_t seed,
                                   std::size_t points_per_part = kDefaultPointsPerPart) {
  std::mt19937_64 rng(mix_seed(seed, 0x7e3a, 0));
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  auto j = [&](double v) { return v * jitter(rng); };
  using detail::BoxSpec;

  if (templ == "laptop") {
    const double w = j(0.34), d = j(0.24), tb = j(0.02), hl = j(0.22), tl = j(0.008);
    Joint hinge{JointType::Revolute, Vec3(0, tb, -0.5 * d), Vec3::UnitX(), 0, 1, -1.8, 1.8};
    return detail::assemble("laptop",
                            {{"base", Vec3(0, 0.5 * tb, 0), Vec3(w, tb, d)},
                             {"lid", Vec3(0, tb + 0.5 * hl, -0.5 * d + 0.5 * tl), Vec3(w, hl, tl)}},
                            {hinge}, seed, points_per_part);
  }
  if (templ == "dishwasher") {
    const double w = j(0.60), h = j(0.80), d = j(0.58), td = j(0.04), gap = j(0.06);
    Joint hinge{JointType::Revolute, Vec3(0, gap, 0.5 * d), Vec3::UnitX(), 0, 1, -0.2, 1.7};
    return detail::assemble("dishwasher",
                            {{"body", Vec3(0, 0.5 * h, 0), Vec3(w, h, d)},
                             {"door", Vec3(0, gap + 0.5 * (h - gap), 0.5 * d + 0.5 * td), Vec3(w, h - gap, td)}},
                            {hinge}, seed, points_per_part);
  }
  if (templ == "drawer") {
    const double w = j(0.50), h = j(0.66), d = j(0.45), fh = j(0.18), fd = j(0.10);
    std::vector<BoxSpec> boxes{{"cabinet", Vec3(0, 0.5 * h, 0), Vec3(w, h, d)}};
    std::vector<Joint> joints;
    for (int i = 0; i < 3; ++i) {
      const double y = h * (i + 0.5) / 3.0;
      boxes.push_back({"drawer_" + std::to_string(i), Vec3(0, y, 0.5 * d + 0.5 * fd), Vec3(0.9 * w, fh, fd)});
      joints.push_back({JointType::Prismatic, Vec3(0, y, 0.5 * d), Vec3::UnitZ(), 0, i + 1, 0.0, 0.4});
    }
    return detail::assemble("drawer", boxes, joints, seed, points_per_part);
  }
  if (templ == "scissors") {
    const double l = j(0.20), wb = j(0.035), t = j(0.006), off = j(0.05);
    Joint pivot{JointType::Revolute, Vec3(0.5 * off, 0, t), Vec3::UnitZ(), 0, 1, -1.2, 1.2};
    return detail::assemble("scissors",
                            {{"blade_a", Vec3(0, 0, 0.5 * t), Vec3(l, wb, t)},
                             {"blade_b", Vec3(off, 0, 1.5 * t), Vec3(l, wb, t)}},
                            {pivot}, seed, points_per_part);
  }
  if (templ == "eyeglasses") {
    const double w = j(0.14), h = j(0.045), t = j(0.012), lt = j(0.14), tw = j(0.012);
    std::vector<BoxSpec> boxes{
        {"front", Vec3(0, 0, 0), Vec3(w, h, t)},
        {"temple_left", Vec3(-0.5 * w + 0.5 * tw, 0, -0.5 * t - 0.5 * lt), Vec3(tw, 0.6 * h, lt)},
        {"temple_right", Vec3(0.5 * w - 0.5 * tw, 0, -0.5 * t - 0.5 * lt), Vec3(tw, 0.6 * h, lt)}};
    std::vector<Joint> joints{
        {JointType::Revolute, Vec3(-0.5 * w + 0.5 * tw, 0, -0.5 * t), Vec3::UnitY(), 0, 1, -1.7, 0.2},
        {JointType::Revolute, Vec3(0.5 * w - 0.5 * tw, 0, -0.5 * t), Vec3::UnitY(), 0, 2, -0.2, 1.7}};
    return detail::assemble("eyeglasses", boxes, joints, seed, points_per_part);
  }
  throw UnknownTemplate("no template named '" + templ + "'");
}

// ---------------------------------------------------------------------------

// Keyed trajectories: joint values are interpolated linearly, the base pose
// along the geodesic between neighbouring keys.
struct MotionScript {
  std::vector<std::vector<std::pair<std::size_t, double>>> joints;
  std::vector<std::pair<std::size_t, Pose>> base;

  void validate(const ArticulatedModel& model) const {
    if (joints.size() != model.joints.size()) throw LengthMismatch("script needs one trajectory per joint");
    for (std::size_t j = 0; j < joints.size(); ++j) {
      for (std::size_t i = 0; i < joints[j].size(); ++i) {
        if (i > 0 && joints[j][i].first <= joints[j][i - 1].first)
          throw ScriptGap("joint keys must have strictly increasing frames");
        const double v = joints[j][i].second;
        if (v < model.joints[j].lower - 1e-12 || v > model.joints[j].upper + 1e-12)
          throw Error("joint value outside limits");
      }
    }
    for (std::size_t i = 1; i < base.size(); ++i)
      if (base[i].first <= base[i - 1].first) throw ScriptGap("base keys must have strictly increasing frames");
  }

  bool covers(std::size_t frame) const {
    auto inside = [frame](std::size_t first, std::size_t last) { return frame >= first && frame <= last; };
    if (base.empty() || !inside(base.front().first, base.back().first)) return false;
    for (const auto& tr : joints)
      if (tr.empty() || !inside(tr.front().first, tr.back().first)) return false;
    return true;
  }

  std::vector<double> joint_values(std::size_t frame) const {
    std::vector<double> out;
    for (const auto& tr : joints) {
      if (tr.empty() || frame < tr.front().first || frame > tr.back().first)
        throw ScriptGap("no joint key covers frame " + std::to_string(frame));
      auto hi = std::lower_bound(tr.begin(), tr.end(), frame, [](const auto& k, std::size_t f) { return k.first < f; });
      if (hi->first == frame) {
        out.push_back(hi->second);
        continue;
      }
      const auto lo = std::prev(hi);
      const double s = static_cast<double>(frame - lo->first) / static_cast<double>(hi->first - lo->first);
      out.push_back(lo->second + s * (hi->second - lo->second));
    }
    return out;
  }

  Pose base_pose(std::size_t frame) const {
    if (base.empty() || frame < base.front().first || frame > base.back().first)
      throw ScriptGap("no base key covers frame " + std::to_string(frame));
    auto hi = std::lower_bound(base.begin(), base.end(), frame, [](const auto& k, std::size_t f) { return k.first < f; });
    if (hi->first == frame) return hi->second;
    const auto lo = std::prev(hi);
    const double s = static_cast<double>(frame - lo->first) / static_cast<double>(hi->first - lo->first);
    return lo->second * exp_map(s * log_map(inverse(lo->second) * hi->second));
  }
};

// Random rigid pose: rotation about a random axis by at most `max_angle`,
// translation around `center` within `spread` per axis.
inline Pose random_pose(std::mt19937_64& rng, double max_angle, const Vec3& center, double spread) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(g(rng), g(rng), g(rng));
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  const double angle = max_angle * 0.5 * (u(rng) + 1.0);
  const Vec3 t = center + spread * Vec3(u(rng), u(rng), u(rng));
  return {axis_angle(axis.normalized(), angle), t};
}

// Each joint moves from `start` at `rate` per frame; the base starts at a
// random pose in front of the camera and drifts slightly.
inline MotionScript linear_script(const ArticulatedModel& model, std::size_t n_frames, const std::vector<double>& start,
                                  const std::vector<double>& rate, std::uint64_t seed, double base_angle = 0.15,
                                  double base_shift = 0.05) {
  if (n_frames == 0) throw Error("script needs at least one frame");
  if (start.size() != model.joints.size() || rate.size() != model.joints.size())
    throw LengthMismatch("one start value and rate per joint required");
  MotionScript s;
  const std::size_t last = n_frames - 1;
  for (std::size_t j = 0; j < model.joints.size(); ++j) {
    const double end = start[j] + rate[j] * static_cast<double>(last);
    if (last == 0)
      s.joints.push_back({{0, start[j]}});
    else
      s.joints.push_back({{0, start[j]}, {last, end}});
  }
  std::mt19937_64 rng(mix_seed(seed, 0xba5e, 0));
  const Pose p0 = random_pose(rng, 0.6, Vec3(0, 0, 1.5), 0.1);
  const Pose drift = random_pose(rng, base_angle, Vec3::Zero(), base_shift);
  s.base.push_back({0, p0});
  if (last > 0) s.base.push_back({last, p0 * drift});
  s.validate(model);
  return s;
}

// Default articulation per template: a steady opening motion sized to stay
// within the joint limits over `n_frames`.
inline MotionScript default_script(const ArticulatedModel& model, std::size_t n_frames, std::uint64_t seed) {
  const double span = static_cast<double>(std::max<std::size_t>(n_frames, 2) - 1);
  std::vector<double> start, rate;
  for (std::size_t j = 0; j < model.joints.size(); ++j) {
    const Joint& jt = model.joints[j];
    double a = 0.0, b = 0.0;
    if (model.name == "laptop") a = 0.0, b = 1.2;
    else if (model.name == "dishwasher") a = 0.0, b = 1.2;
    else if (model.name == "drawer") a = 0.0, b = 0.1 + 0.08 * static_cast<double>(j);
    else if (model.name == "scissors") a = 0.0, b = 0.8;
    else if (model.name == "eyeglasses") a = 0.0, b = (j == 0 ? -1.2 : 1.2);
    else a = jt.lower, b = 0.5 * (jt.lower + jt.upper);
    start.push_back(a);
    rate.push_back((b - a) / span);
  }
  return linear_script(model, n_frames, start, rate, seed);
}

// ---------------------------------------------------------------------------

struct FrameNoise {
  double sigma_point = 0.0;  // m, isotropic Gaussian
  double visibility = 1.0;   // retained fraction after half-space culling
};

struct Sequence {
  std::string template_name;
  std::uint64_t seed = 0;
  FrameNoise noise;
  ArticulatedModel model;
  std::vector<PointCloud> frames;
  GroundTruth truth;
};

// One frame: per-part clouds placed by `poses`, farthest-point sampled to
// `n_points`, culled by a half-space orthogonal to `view`, then jittered.
// Normals come from the model unless point noise is present.
inline PointCloud render_frame(const ArticulatedModel& model, const std::vector<Pose>& poses, const FrameNoise& noise,
                               const Vec3& view, std::uint64_t seed, std::size_t n_points = kDefaultFramePoints) {
  if (noise.visibility <= 0.0 || noise.visibility > 1.0) throw Error("visibility must lie in (0, 1]");
  PointCloud full;
  for (std::size_t k = 0; k < model.num_parts(); ++k) {
    const PointCloud& can = model.parts[k].canonical;
    full.reserve(full.size() + can.size());
    for (std::size_t i = 0; i < can.size(); ++i)
      full.push_back(apply(poses[k], can.points[i]), poses[k].rotation * can.normals[i], static_cast<int>(k),
                     static_cast<int>(i));
  }
  PointCloud sampled = downsample(full, n_points);

  if (noise.visibility < 1.0) {
    const auto keep = static_cast<std::size_t>(std::llround(noise.visibility * static_cast<double>(sampled.size())));
    std::vector<std::size_t> order(sampled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sampled.points[a].dot(view) < sampled.points[b].dot(view);
    });
    order.resize(std::max<std::size_t>(keep, 1));
    std::sort(order.begin(), order.end());
    sampled = sampled.subset(order);
  }

  if (noise.sigma_point > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise.sigma_point);
    for (Vec3& p : sampled.points) p += Vec3(g(rng), g(rng), g(rng));
    const Vec3 camera = centroid(sampled.points) - 2.0 * view;
    if (sampled.size() >= 16) sampled = estimate_normals(sampled, 16, camera);
  }
  return sampled;
}

inline Sequence render_sequence(const ArticulatedModel& model, const MotionScript& script, std::size_t n_frames,
                                const FrameNoise& noise, std::uint64_t seed,
                                std::size_t n_points = kDefaultFramePoints) {
  script.validate(model);
  Sequence seq;
  seq.seed = seed;
  seq.noise = noise;
  seq.model = model;
  seq.template_name = model.name;
  for (const Part& p : model.parts) seq.truth.scales.push_back(p.scale());
  std::mt19937_64 rng(mix_seed(seed, 0x1e55, 0));
  std::normal_distribution<double> g(0.0, 1.0);
  // Camera looks roughly along +z with a random tilt.
  const Vec3 view = (Vec3(0, 0, 1) + 0.3 * Vec3(g(rng), g(rng), 0.0)).normalized();
  for (std::size_t t = 0; t < n_frames; ++t) {
    if (!script.covers(t)) throw ScriptGap("script does not cover frame " + std::to_string(t));
    const auto poses = model.forward_kinematics(script.base_pose(t), script.joint_values(t));
    seq.truth.poses.push_back(poses);
    seq.frames.push_back(render_frame(model, poses, noise, view, mix_seed(seed, 0xf4a3e, t), n_points));
  }
  return seq;
}

inline Sequence generate_sequence(const std::string& templ, std::size_t n_frames, const FrameNoise& noise,
                                  std::uint64_t seed, std::size_t n_points = kDefaultFramePoints) {
  const ArticulatedModel model = make_model(templ, seed);
  Sequence seq = render_sequence(model, default_script(model, n_frames, seed), n_frames, noise, seed, n_points);
  seq.template_name = templ;
  return seq;
}

// Ground truth in the result-file layout (energy, keyframe and seconds are 0).
inline std::vector<FrameResult> truth_records(const GroundTruth& truth) {
  std::vector<FrameResult> out;
  for (std::size_t t = 0; t < truth.poses.size(); ++t) {
    FrameResult r;
    r.frame = t;
    r.poses = truth.poses[t];
    r.scales = truth.scales;
    r.carried.assign(r.poses.size(), false);
    out.push_back(std::move(r));
  }
  return out;
}

inline GroundTruth truth_from_records(const std::vector<FrameResult>& records) {
  GroundTruth g;
  for (std::size_t t = 0; t < records.size(); ++t) {
    if (records[t].frame != t) throw ParseError("ground truth frames must be contiguous from 0");
    g.poses.push_back(records[t].poses);
  }
  if (!records.empty()) g.scales = records.front().scales;
  return g;
}

// ---------------------------------------------------------------------------
// Sequence manifest:
//   sequence <name>
//   template <name>
//   seed <n>
//   noise <sigma_point> <visibility>
//   model <path>
//   frames <count>
//   frame <index> <path>
//   truth <path>
// Paths are relative to the manifest's directory.

struct SequenceManifest {
  std::string name;
  std::string template_name;
  std::uint64_t seed = 0;
  FrameNoise noise;
  std::string model_path;
  std::vector<std::string> frame_paths;
  std::string truth_path;
};

inline SequenceManifest write_sequence(const std::string& dir, const Sequence& seq, const std::string& name = "sequence") {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  SequenceManifest m;
  m.name = name;
  m.template_name = seq.template_name;
  m.seed = seq.seed;
  m.noise = seq.noise;
  m.model_path = "model.txt";
  m.truth_path = "truth.txt";
  write_model((fs::path(dir) / m.model_path).string(), seq.model);
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frames/frame_%04zu.txt", t);
    m.frame_paths.emplace_back(buf);
    write_cloud((fs::path(dir) / buf).string(), seq.frames[t]);
  }
  write_results((fs::path(dir) / m.truth_path).string(), truth_records(seq.truth));

  std::ofstream out(fs::path(dir) / "sequence.txt");
  if (!out) throw Error("cannot write manifest in " + dir);
  out << "sequence " << m.name << "\ntemplate " << m.template_name << "\nseed " << m.seed << "\nnoise "
      << format_double(m.noise.sigma_point) << ' ' << format_double(m.noise.visibility) << "\nmodel " << m.model_path
      << "\nframes " << m.frame_paths.size() << '\n';
  for (std::size_t t = 0; t < m.frame_paths.size(); ++t) out << "frame " << t << ' ' << m.frame_paths[t] << '\n';
  out << "truth " << m.truth_path << '\n';
  return m;
}

inline SequenceManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  SequenceManifest m;
  std::size_t declared = 0;
  bool have_count = false;
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
    bool ok = true;
    if (tag == "sequence") ok = static_cast<bool>(ss >> m.name);
    else if (tag == "template") ok = static_cast<bool>(ss >> m.template_name);
    else if (tag == "seed") ok = static_cast<bool>(ss >> m.seed);
    else if (tag == "noise") ok = static_cast<bool>(ss >> m.noise.sigma_point >> m.noise.visibility);
    else if (tag == "model") ok = static_cast<bool>(ss >> m.model_path);
    else if (tag == "truth") ok = static_cast<bool>(ss >> m.truth_path);
    else if (tag == "frames") ok = have_count = static_cast<bool>(ss >> declared);
    else if (tag == "frame") {
      std::size_t idx = 0;
      std::string p;
      ok = static_cast<bool>(ss >> idx >> p);
      if (ok && idx != m.frame_paths.size()) throw ParseError(where + ": frames must be listed in order");
      m.frame_paths.push_back(p);
    } else {
      throw ParseError(where + ": unknown record '" + tag + "'");
    }
    if (!ok) throw ParseError(where + ": malformed '" + tag + "' record");
  }
  if (m.model_path.empty()) throw ParseError(path + ": no model record");
  if (have_count && declared != m.frame_paths.size())
    throw ParseError(path + ": declares " + std::to_string(declared) + " frames, lists " +
                     std::to_string(m.frame_paths.size()));
  return m;
}

// Loads a sequence; the ground truth is optional (tracking only needs it for
// the oracle predictor).
inline Sequence read_sequence(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const SequenceManifest m = read_manifest(manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();
  Sequence seq;
  seq.template_name = m.template_name;
  seq.seed = m.seed;
  seq.noise = m.noise;
  seq.model = read_model((dir / m.model_path).string());
  for (const auto& p : m.frame_paths) seq.frames.push_back(read_cloud((dir / p).string()));
  if (!m.truth_path.empty() && fs::exists(dir / m.truth_path)) {
    seq.truth = truth_from_records(read_results((dir / m.truth_path).string()));
    if (seq.truth.num_frames() != seq.frames.size())
      throw LengthMismatch("ground truth covers " + std::to_string(seq.truth.num_frames()) + " of " +
                           std::to_string(seq.frames.size()) + " frames");
  }
  return seq;
}

inline std::vector<PartFrame> canonical_frames(const ArticulatedModel& model) {
  std::vector<PartFrame> out;
  for (const Part& p : model.parts) out.push_back(p.frame());
  return out;
}

inline std::vector<std::vector<Vec3>> canonical_normals(const ArticulatedModel& model) {
  std::vector<std::vector<Vec3>> out;
  for (const Part& p : model.parts) out.push_back(p.canonical.normals);
  return out;
}

// Oracle predictor wired to a sequence's ground truth and a tracker config.
inline std::shared_ptr<const Predictor> make_oracle(const Sequence& seq, const TrackerConfig& cfg) {
  if (seq.truth.num_frames() == 0) throw Error("the oracle predictor needs ground truth");
  return std::make_shared<OraclePredictor>(seq.truth, canonical_frames(seq.model), cfg.noise, cfg.oracle_reference,
                                           canonical_normals(seq.model));
}

}  // namespace arttrack
