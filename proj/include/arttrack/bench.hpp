#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "arttrack/metrics.hpp"
#include "arttrack/synth.hpp"
#include "arttrack/tracker.hpp"

namespace arttrack {

// Runs the tracker over a sequence from its ground-truth initial pose.
inline std::vector<FrameResult> track_sequence(const Sequence& seq, const TrackerConfig& cfg) {
  if (seq.frames.empty()) return {};
  if (seq.truth.num_frames() == 0) throw Error("sequence has no ground truth for the initial pose");
  Tracker tracker(seq.model, make_oracle(seq, cfg), cfg);
  return tracker.run(seq.frames, seq.truth.poses.front());
}

// Calls fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
// rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct AblationSpec {
  std::string template_name = "dishwasher";
  std::size_t frames = 50;
  FrameNoise frame_noise;
  std::vector<std::uint64_t> seeds;
  TrackerConfig base;
  std::size_t jobs = 1;
};

struct AblationRow {
  KeyframeMode mode = KeyframeMode::Dynamic;
  bool kinematic = true;
  // Per part, median over seeds.
  std::vector<double> median_rotation;        // of each run's per-frame median (deg)
  std::vector<double> median_translation;     // of each run's per-frame median (m)
  std::vector<double> median_final_rotation;  // final frame (deg)
  std::vector<double> median_cumulative;      // final composite
  // Per seed, per part.
  std::vector<std::vector<double>> run_rotation;
  std::vector<std::vector<double>> run_final_rotation;

  double mean_over_parts(const std::vector<double>& v) const {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
};

inline AblationRow run_ablation_cell(const AblationSpec& spec, const std::vector<Sequence>& sequences,
                                     KeyframeMode mode, bool kinematic) {
  AblationRow row;
  row.mode = mode;
  row.kinematic = kinematic;
  const std::size_t n = sequences.size();
  std::vector<EvalReport> reports(n);
  parallel_for(n, spec.jobs, [&](std::size_t i) {
    TrackerConfig cfg = spec.base;
    cfg.keyframe_mode = mode;
    cfg.kinematic = kinematic;
    cfg.seed = mix_seed(spec.base.seed, sequences[i].seed, 0xab1a7e);
    const auto results = track_sequence(sequences[i], cfg);
    reports[i] = evaluate(results, truth_records(sequences[i].truth), sequences[i].model, 200, 0);
  });
  if (n == 0) return row;
  const std::size_t parts = reports.front().parts.size();
  row.run_rotation.assign(n, std::vector<double>(parts));
  row.run_final_rotation.assign(n, std::vector<double>(parts));
  for (std::size_t k = 0; k < parts; ++k) {
    std::vector<double> rot, tr, fin, cum;
    for (std::size_t i = 0; i < n; ++i) {
      const PartReport& p = reports[i].parts[k];
      rot.push_back(p.median_rotation);
      tr.push_back(p.median_translation);
      fin.push_back(p.cumulative.final_rotation);
      cum.push_back(p.cumulative.composite);
      row.run_rotation[i][k] = p.median_rotation;
      row.run_final_rotation[i][k] = p.cumulative.final_rotation;
    }
    row.median_rotation.push_back(median(rot));
    row.median_translation.push_back(median(tr));
    row.median_final_rotation.push_back(median(fin));
    row.median_cumulative.push_back(median(cum));
  }
  return row;
}

inline std::vector<Sequence> ablation_sequences(const AblationSpec& spec) {
  std::vector<Sequence> seqs(spec.seeds.size());
  parallel_for(seqs.size(), spec.jobs, [&](std::size_t i) {
    seqs[i] = generate_sequence(spec.template_name, spec.frames, spec.frame_noise, spec.seeds[i]);
  });
  return seqs;
}

// The {dynamic, fixed, none} x {kinematic on, off} grid.
inline std::vector<AblationRow> ablate(const AblationSpec& spec) {
  const auto seqs = ablation_sequences(spec);
  std::vector<AblationRow> rows;
  for (KeyframeMode mode : {KeyframeMode::Dynamic, KeyframeMode::Fixed, KeyframeMode::None})
    for (bool kin : {true, false}) rows.push_back(run_ablation_cell(spec, seqs, mode, kin));
  return rows;
}

inline const AblationRow* find_row(const std::vector<AblationRow>& rows, KeyframeMode mode, bool kin) {
  for (const auto& r : rows)
    if (r.mode == mode && r.kinematic == kin) return &r;
  return nullptr;
}

inline void print_ablation(std::ostream& out, const std::vector<AblationRow>& rows) {
  char buf[256];
  out << "keyframe  kinematic  part  median_rot_deg  median_trans_m  final_rot_deg  cumulative\n";
  for (const AblationRow& r : rows) {
    for (std::size_t k = 0; k < r.median_rotation.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%-8s  %-9s  %4zu  %14.4f  %14.5f  %13.4f  %10.4f\n", to_string(r.mode),
                    r.kinematic ? "on" : "off", k, r.median_rotation[k], r.median_translation[k],
                    r.median_final_rotation[k], r.median_cumulative[k]);
      out << buf;
    }
  }
  for (const AblationRow& r : rows) {
    out << "ABLATION keyframe=" << to_string(r.mode) << " kinematic=" << (r.kinematic ? "on" : "off");
    for (std::size_t k = 0; k < r.median_rotation.size(); ++k)
      out << " rot" << k << '=' << format_double(r.median_rotation[k]) << " final" << k << '='
          << format_double(r.median_final_rotation[k]);
    out << '\n';
  }
  auto score = [](const AblationRow* r) { return r ? r->mean_over_parts(r->median_final_rotation) : 0.0; };
  auto rot = [](const AblationRow* r) { return r ? r->mean_over_parts(r->median_rotation) : 0.0; };
  for (bool kin : {true, false}) {
    const double d = score(find_row(rows, KeyframeMode::Dynamic, kin));
    const double f = score(find_row(rows, KeyframeMode::Fixed, kin));
    const double n = score(find_row(rows, KeyframeMode::None, kin));
    out << "CHECK keyframe_order kinematic=" << (kin ? "on" : "off") << " dynamic<=fixed<=none="
        << ((d <= f && f <= n) ? "yes" : "no") << '\n';
  }
  const double on = rot(find_row(rows, KeyframeMode::Dynamic, true));
  const double off = rot(find_row(rows, KeyframeMode::Dynamic, false));
  out << "CHECK kinematic_gain ratio=" << format_double(off > 0.0 ? on / off : 0.0) << '\n';
}

}  // namespace arttrack
