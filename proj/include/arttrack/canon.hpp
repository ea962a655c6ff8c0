#pragma once

#include <string>
#include <vector>

#include "arttrack/cloud.hpp"
#include "arttrack/error.hpp"
#include "arttrack/se3.hpp"

namespace arttrack {

inline constexpr double kDefaultKeyframeThreshold = 0.01;

// First frame of a temporal segment. transform[k] = (T_n^k)^-1 for the
// estimated part poses at frame n.
struct Keyframe {
  std::size_t segment = 0;
  std::size_t frame = 0;
  std::vector<Pose> transform;
  PointCloud snapshot;

  static Keyframe from_poses(std::size_t segment, std::size_t frame, const std::vector<Pose>& poses,
                             PointCloud snapshot = {}) {
    Keyframe k{segment, frame, {}, std::move(snapshot)};
    k.transform.reserve(poses.size());
    for (const Pose& p : poses) k.transform.push_back(inverse(p));
    return k;
  }

  Pose pose(std::size_t part) const { return inverse(transform.at(part)); }
};

struct SegmentState {
  Keyframe keyframe;
  std::size_t frames_since = 0;
  std::vector<double> energy_history;
};

enum class KeyframeMode {
  Dynamic,  // new segment whenever the energy falls below the threshold
  Fixed,    // frame 0 stays the keyframe
  None,     // every frame becomes the keyframe of the next
};

inline const char* to_string(KeyframeMode m) {
  switch (m) {
    case KeyframeMode::Dynamic: return "dynamic";
    case KeyframeMode::Fixed: return "fixed";
    case KeyframeMode::None: return "none";
  }
  return "?";
}

inline KeyframeMode keyframe_mode_from_string(const std::string& s) {
  if (s == "dynamic") return KeyframeMode::Dynamic;
  if (s == "fixed") return KeyframeMode::Fixed;
  if (s == "none") return KeyframeMode::None;
  throw ParseError("unknown keyframe mode '" + s + "'");
}

// Applies the keyframe transform of `part` to that part's points and normals.
inline PointCloud quasi_canonicalize(const PointCloud& frame, const Keyframe& keyframe, int part) {
  if (part < 0 || static_cast<std::size_t>(part) >= keyframe.transform.size())
    throw UnknownPart("part " + std::to_string(part) + " has no keyframe transform");
  return transformed(frame.part(part), keyframe.transform[static_cast<std::size_t>(part)]);
}

// (D_C + D_H) / |observed|.
inline double segment_energy(const PointCloud& predicted, const PointCloud& observed,
                             ChamferMode chamfer_mode = ChamferMode::Mean) {
  if (predicted.empty() || observed.empty()) throw EmptyCloud("energy needs non-empty clouds");
  const CloudDistances d = cloud_distances(predicted, observed, chamfer_mode);
  return (d.chamfer + d.hausdorff) / static_cast<double>(observed.size());
}

struct KeyframeUpdate {
  SegmentState state;
  bool updated = false;
};

// Starts a new segment at `frame_index` when the mode asks for it; otherwise
// counts the frame against the current segment. The energy is always logged.
inline KeyframeUpdate maybe_update_keyframe(SegmentState state, double energy, std::size_t frame_index,
                                            const PointCloud& frame, const std::vector<Pose>& poses,
                                            double phi = kDefaultKeyframeThreshold,
                                            KeyframeMode mode = KeyframeMode::Dynamic) {
  if (!(phi > 0.0)) throw Error("keyframe threshold must be positive");
  state.energy_history.push_back(energy);
  bool update = false;
  switch (mode) {
    case KeyframeMode::Dynamic: update = energy < phi; break;
    case KeyframeMode::Fixed: update = false; break;
    case KeyframeMode::None: update = true; break;
  }
  if (update) {
    state.keyframe = Keyframe::from_poses(state.keyframe.segment + 1, frame_index, poses, frame);
    state.frames_since = 0;
  } else {
    ++state.frames_since;
  }
  return {std::move(state), update};
}

}  // namespace arttrack
