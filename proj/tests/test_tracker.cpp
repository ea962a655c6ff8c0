#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "arttrack/bench.hpp"
#include "arttrack/metrics.hpp"
#include "arttrack/synth.hpp"
#include "arttrack/tracker.hpp"

using namespace arttrack;

namespace {

// Small voting budget keeps the suite quick; accuracy checks stay loose.
TrackerConfig fast_config() {
  TrackerConfig c;
  c.n_pairs = 1500;
  c.sphere_bins = 2048;
  return c;
}

double max_pose_diff(const Pose& a, const Pose& b) { return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff(); }

class TrackerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { seq_ = new Sequence(generate_sequence("laptop", 6, {}, 7, 1500)); }
  static void TearDownTestSuite() {
    delete seq_;
    seq_ = nullptr;
  }
  Tracker tracker(const TrackerConfig& cfg = fast_config()) const {
    return Tracker(seq_->model, make_oracle(*seq_, cfg), cfg);
  }
  static Sequence* seq_;
};

Sequence* TrackerTest::seq_ = nullptr;

}  // namespace

TEST_F(TrackerTest, InitFromIdentityHasZeroTwists) {
  const Tracker tr = tracker();
  const std::vector<Pose> id(2, Pose::identity());
  const TrackerState s = tr.init(seq_->frames[0], id);
  for (const Twist& x : s.twists) EXPECT_EQ(x.vector().norm(), 0.0);
  EXPECT_EQ(s.frame, 0u);
  EXPECT_EQ(s.segment.keyframe.frame, 0u);
}

TEST_F(TrackerTest, InitTwistsReproducePoses) {
  const Tracker tr = tracker();
  const auto& t0 = seq_->truth.poses[0];
  const TrackerState s = tr.init(seq_->frames[0], t0);
  for (std::size_t k = 0; k < t0.size(); ++k) EXPECT_LT(max_pose_diff(exp_map(s.twists[k]), t0[k]), 1e-12);
  EXPECT_THROW(tr.init(seq_->frames[0], {t0[0]}), LengthMismatch);
}

TEST_F(TrackerTest, UnknownLabelThrows) {
  const Tracker tr = tracker();
  PointCloud bad = seq_->frames[0];
  bad.part_labels[3] = 5;
  EXPECT_THROW(tr.init(bad, seq_->truth.poses[0]), LabelMismatch);
  const TrackerState s = tr.init(seq_->frames[0], seq_->truth.poses[0]);
  EXPECT_THROW(tr.step(s, bad), LabelMismatch);
}

TEST_F(TrackerTest, CleanSequenceStaysOnTruth) {
  const auto res = tracker().run(seq_->frames, seq_->truth.poses[0]);
  ASSERT_EQ(res.size(), seq_->frames.size());
  for (std::size_t t = 0; t < res.size(); ++t) {
    EXPECT_EQ(res[t].frame, t);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_LT(rotation_error(res[t].poses[k], seq_->truth.poses[t][k]), 1.0) << t << ' ' << k;
      EXPECT_LT(translation_error(res[t].poses[k], seq_->truth.poses[t][k]), 0.005) << t << ' ' << k;
      EXPECT_FALSE(res[t].carried[k]);
    }
  }
  EXPECT_LT(e_kin(res.back().poses, seq_->model), 1e-6);
}

TEST_F(TrackerTest, MissingPartIsCarried) {
  TrackerConfig cfg = fast_config();
  cfg.kinematic = false;
  const Tracker tr = tracker(cfg);
  const TrackerState s = tr.init(seq_->frames[0], seq_->truth.poses[0]);
  const PointCloud only_base = seq_->frames[1].part(0);
  const auto [next, r] = tr.step(s, only_base);
  EXPECT_FALSE(r.carried[0]);
  EXPECT_TRUE(r.carried[1]);
  EXPECT_EQ(r.poses[1].matrix(), s.poses[1].matrix());
  EXPECT_EQ(next.frame, 1u);
}

TEST_F(TrackerTest, EmptyInputs) {
  const Tracker tr = tracker();
  EXPECT_TRUE(tr.run({}, seq_->truth.poses[0]).empty());
  const TrackerState s = tr.init(seq_->frames[0], seq_->truth.poses[0]);
  EXPECT_THROW(tr.step(s, PointCloud{}), EmptyCloud);

  std::vector<PointCloud> frames(seq_->frames.begin(), seq_->frames.begin() + 3);
  frames[2] = PointCloud{};
  try {
    tr.run(frames, seq_->truth.poses[0]);
    FAIL() << "expected TrackingAborted";
  } catch (const TrackingAborted& e) {
    EXPECT_EQ(e.frame_index, 2u);
    EXPECT_EQ(e.results.size(), 2u);
  }
}

TEST_F(TrackerTest, RunEqualsRepeatedStep) {
  const Tracker tr = tracker();
  const std::vector<PointCloud> frames(seq_->frames.begin(), seq_->frames.begin() + 4);
  const auto res = tr.run(frames, seq_->truth.poses[0]);
  TrackerState s = tr.init(frames[0], seq_->truth.poses[0]);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    auto [next, r] = tr.step(std::move(s), frames[t]);
    s = std::move(next);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(r.poses[k].matrix(), res[t].poses[k].matrix());
    EXPECT_EQ(r.energy, res[t].energy);
    EXPECT_EQ(r.keyframe_updated, res[t].keyframe_updated);
  }
}

TEST_F(TrackerTest, NoisyRunIsDeterministic) {
  TrackerConfig cfg = fast_config();
  cfg.noise.sigma_trans = 0.01;
  cfg.noise.sigma_dir = 0.05;
  cfg.seed = 11;
  const auto a = tracker(cfg).run(seq_->frames, seq_->truth.poses[0]);
  const auto b = tracker(cfg).run(seq_->frames, seq_->truth.poses[0]);
  std::ostringstream sa, sb;
  write_results(sa, a);
  write_results(sb, b);
  EXPECT_EQ(sa.str(), sb.str());

  std::vector<double> rot;
  for (std::size_t t = 1; t < a.size(); ++t)
    for (std::size_t k = 0; k < 2; ++k) rot.push_back(rotation_error(a[t].poses[k], seq_->truth.poses[t][k]));
  EXPECT_LT(median(rot), 5.0);
}

TEST_F(TrackerTest, AdditiveAccumulationSumsTwists) {
  TrackerConfig composed = fast_config();
  composed.kinematic = false;
  TrackerConfig additive = composed;
  additive.accumulation = Accumulation::Additive;
  const auto& t0 = seq_->truth.poses[0];
  const Tracker a = tracker(composed), b = tracker(additive);
  const auto ra = a.step(a.init(seq_->frames[0], t0), seq_->frames[1]).second;
  const auto rb = b.step(b.init(seq_->frames[0], t0), seq_->frames[1]).second;
  for (std::size_t k = 0; k < 2; ++k) {
    // Same vote, so the increment is shared; only the accumulation differs.
    const Twist dxi = log_map(inverse(t0[k]) * ra.poses[k]);
    const Pose expected = exp_map(log_map(t0[k]) + dxi);
    EXPECT_LT(max_pose_diff(rb.poses[k], expected), 1e-9);
  }
  // The object sits away from the origin, so the sum of twists departs from
  // the composition.
  EXPECT_GT(max_pose_diff(rb.poses[1], ra.poses[1]), 1e-4);
}

TEST(TrackerConfig, WriteParseRoundTrip) {
  TrackerConfig c;
  c.n_pairs = 1234;
  c.phi = 0.02;
  c.keyframe_mode = KeyframeMode::Fixed;
  c.accumulation = Accumulation::Additive;
  c.kinematic = false;
  c.kinopt.geo = GeoResidual::Centroid;
  c.oracle_reference = OracleReference::Absolute;
  c.noise.sigma_dir = 0.125;
  c.seed = 99;
  std::stringstream ss;
  write_config(ss, c);
  const TrackerConfig r = parse_config(ss);
  std::stringstream again;
  write_config(again, r);
  ss.clear();
  ss.seekg(0);
  EXPECT_EQ(again.str(), ss.str());
  EXPECT_EQ(r.n_pairs, 1234u);
  EXPECT_EQ(r.keyframe_mode, KeyframeMode::Fixed);
  EXPECT_EQ(r.kinopt.geo, GeoResidual::Centroid);
  EXPECT_EQ(r.seed, 99u);
}

TEST(TrackerConfig, CommentsAndErrors) {
  std::istringstream ok("# tracker\n\nphi = 0.5  # loose\npolish=false\n");
  const TrackerConfig c = parse_config(ok);
  EXPECT_EQ(c.phi, 0.5);
  EXPECT_FALSE(c.polish);
  std::istringstream unknown("warp = 9\n");
  EXPECT_THROW(parse_config(unknown), ParseError);
  std::istringstream bad_value("n_pairs = many\n");
  EXPECT_THROW(parse_config(bad_value), ParseError);
  std::istringstream no_eq("phi 0.5\n");
  EXPECT_THROW(parse_config(no_eq), ParseError);
  TrackerConfig zero;
  EXPECT_THROW(set_config_value(zero, "keyframe_mode", "sometimes"), ParseError);
}

TEST(ResultFile, RoundTrip) {
  FrameResult a;
  a.frame = 0;
  a.poses = {Pose::identity(), exp_map({Vec3(0.1, 0.2, -0.3), Vec3(1.5, -0.25, 2.0)})};
  a.scales = {Vec3(1.0, 0.5, 0.25), Vec3(0.75, 1.0, 0.125)};
  a.energy = 0.0123;
  FrameResult b = a;
  b.frame = 1;
  b.keyframe_updated = true;
  b.seconds = 0.5;
  const auto path = (std::filesystem::temp_directory_path() / "arttrack_results_test.txt").string();
  write_results(path, {a, b}, true);
  const auto r = read_results(path);
  ASSERT_EQ(r.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_LT(max_pose_diff(r[1].poses[k], b.poses[k]), 1e-11);
    EXPECT_LT((r[1].scales[k] - b.scales[k]).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_TRUE(r[1].keyframe_updated);
  EXPECT_FALSE(r[0].keyframe_updated);
  EXPECT_DOUBLE_EQ(r[1].seconds, 0.5);
  EXPECT_DOUBLE_EQ(r[0].energy, 0.0123);

  write_results(path, {a, b}, false);
  EXPECT_EQ(read_results(path)[1].seconds, 0.0);
  std::ofstream(path) << "0 0 1 0 0\n";
  EXPECT_THROW(read_results(path), ParseError);
}
