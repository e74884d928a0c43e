#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "maskmotion/error.h"
#include "maskmotion/tracker.h"

namespace maskmotion {
namespace {

FrameMask Box(int side, int r0, int c0, int r1, int c1) {
  FrameMask m(side, side);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.set(r, c, true);
  return m;
}

Embedding Unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

double BruteForceBest(const ScoreMatrix& s) {
  const int n = s.rows(), m = s.cols();
  const bool rows_small = n <= m;
  std::vector<int> idx(rows_small ? m : n);
  std::iota(idx.begin(), idx.end(), 0);
  double best = -1e300;
  do {
    double total = 0;
    if (rows_small) {
      for (int i = 0; i < n; ++i) total += s(i, idx[i]);
    } else {
      for (int j = 0; j < m; ++j) total += s(idx[j], j);
    }
    best = std::max(best, total);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

double AssignedTotal(const ScoreMatrix& s, const std::vector<int>& cols) {
  double total = 0;
  std::set<int> used;
  for (int i = 0; i < s.rows(); ++i) {
    if (cols[i] < 0) continue;
    EXPECT_TRUE(used.insert(cols[i]).second) << "column reused";
    total += s(i, cols[i]);
  }
  return total;
}

TEST(AppearanceScoreTest, SingletonIsOne) {
  const ScoreMatrix s = AppearanceScore({Unit({1, 2, 3})}, {Unit({-3, 1, 0})}, 0.1);
  ASSERT_EQ(s.rows(), 1);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
}

TEST(AppearanceScoreTest, TwoByTwoMatchesHandComputedBiSoftmax) {
  const Embedding a = Unit({1, 0}), b = Unit({0, 1});
  const ScoreMatrix s = AppearanceScore({a, b}, {a, b}, 1.0);
  // Cosines are [[1, 0], [0, 1]]; each softmax gives e / (e + 1) on the
  // diagonal and 1 / (e + 1) off it, and the two directions agree.
  const double diag = std::exp(1.0) / (std::exp(1.0) + 1.0);
  EXPECT_NEAR(s(0, 0), diag, 1e-12);
  EXPECT_NEAR(s(1, 1), diag, 1e-12);
  EXPECT_NEAR(s(0, 1), 1.0 - diag, 1e-12);
  EXPECT_GT(s(0, 0), s(0, 1));
}

TEST(AppearanceScoreTest, SymmetricInputsGiveSymmetricMatrix) {
  std::mt19937 rng(4);
  std::normal_distribution<double> n(0, 1);
  std::vector<Embedding> e;
  for (int i = 0; i < 4; ++i) e.push_back(Unit({n(rng), n(rng), n(rng)}));
  const ScoreMatrix s = AppearanceScore(e, e, 0.3);
  EXPECT_TRUE(s.isApprox(s.transpose(), 1e-12));
  EXPECT_GE(s.minCoeff(), 0.0);
  EXPECT_LE(s.maxCoeff(), 1.0);
}

TEST(AppearanceScoreTest, ZeroNormIsAnError) {
  try {
    AppearanceScore({{0, 0}}, {Unit({1, 1})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kNumeric);
  }
}

TEST(AppearanceEmbeddingTest, UnitNormAndColourSensitive) {
  ImageFrame img(8, 8, 0.5f);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) img.set(r, c, 0, 1.0f);
  const Embedding red = AppearanceEmbedding(img, Box(8, 0, 0, 4, 4));
  const Embedding grey = AppearanceEmbedding(img, Box(8, 4, 4, 8, 8));
  double n = 0;
  for (double v : red) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-12);
  EXPECT_NE(red, grey);
  EXPECT_THROW(AppearanceEmbedding(img, FrameMask(8, 8)), Error);
}

TEST(MotionScoreTest, IdenticalAndDisjointMasks) {
  const FrameMask a = Box(16, 2, 2, 6, 6), b = Box(16, 10, 10, 14, 14);
  const ScoreMatrix s = MotionScore({a, std::nullopt}, {a, b});
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(s(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(s(1, 1), 0.0);
}

TEST(MotionScoreTest, NetworkRowsInUnitIntervalAndColdStartZero) {
  NetConfig c;
  c.input_side = 16;
  c.latent_l = 6;
  c.memory_c = 5;
  c.encoder_channels = {2, 3, 4};
  c.lstm_layers = 1;
  const MotionNet net(c, 2);
  MaskSequence two, one;
  two.instance_id = one.instance_id = "obj";
  for (int t = 0; t < 2; ++t) {
    two.frames.push_back(Box(32, 4 + t, 4 + t, 12 + t, 12 + t));
    two.frame_indices.push_back(t);
  }
  one.frames.push_back(two.frames[0]);
  one.frame_indices.push_back(0);
  const ScoreMatrix s =
      MotionScore(net, {two, one}, {Box(32, 6, 6, 14, 14), Box(32, 20, 20, 30, 30)});
  EXPECT_GE(s.minCoeff(), 0.0);
  EXPECT_LE(s.maxCoeff(), 1.0);
  EXPECT_EQ(s.row(1).norm(), 0.0);
}

TEST(AssignmentTest, MatchesBruteForceUpToSixBySix) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 6, m = 1 + (trial / 6) % 6;
    ScoreMatrix s(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) s(i, j) = u(rng);
    const auto cols = SolveAssignment(s);
    ASSERT_EQ(static_cast<int>(cols.size()), n);
    EXPECT_EQ(std::count_if(cols.begin(), cols.end(), [](int c) { return c >= 0; }),
              std::min(n, m));
    EXPECT_NEAR(AssignedTotal(s, cols), BruteForceBest(s), 1e-9) << n << "x" << m;
  }
}

TEST(AssignmentTest, RowShiftsDoNotChangeTheAssignment) {
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 5;
    ScoreMatrix s(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s(i, j) = u(rng);
    ScoreMatrix shifted = s;
    for (int i = 0; i < n; ++i) shifted.row(i).array() += 10.0 * u(rng) - 5.0;
    EXPECT_EQ(SolveAssignment(s), SolveAssignment(shifted));
  }
}

TEST(FuseAndAssignTest, AppearanceOnlyExample) {
  ScoreMatrix app(2, 2);
  app << 0.9, 0.1, 0.2, 0.8;
  const Assignment a = FuseAndAssign(app, nullptr, 1.0, 0, {}, 0.2);
  EXPECT_EQ(a.matches, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}));
}

TEST(FuseAndAssignTest, MotionBreaksAppearanceTies) {
  ScoreMatrix app = ScoreMatrix::Constant(2, 2, 0.5), motion(2, 2);
  motion << 0, 1, 1, 0;
  const Assignment a = FuseAndAssign(app, &motion, 1.0, 0, {}, 0.2);
  EXPECT_EQ(a.matches, (std::vector<std::pair<int, int>>{{0, 1}, {1, 0}}));
  motion << 1, 0, 0, 1;
  const Assignment b = FuseAndAssign(app, &motion, 1.0, 0, {}, 0.2);
  EXPECT_EQ(b.matches, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}));
}

TEST(FuseAndAssignTest, ZeroWeightKeepsAppearanceExactly) {
  ScoreMatrix app(2, 3), motion(2, 3);
  app << 0.31, 0.2, 0.49, 0.17, 0.8, 0.03;
  motion << 1, 0.5, 0.25, 0, 0.75, 1;
  EXPECT_EQ(FuseAndAssign(app, &motion, 0.0, 0, {}, 0.2).fused, app);
}

TEST(FuseAndAssignTest, ThresholdTopKAndShapes) {
  ScoreMatrix app(2, 2);
  app << 0.15, 0.0, 0.0, 0.9;
  const Assignment a = FuseAndAssign(app, nullptr, 1.0, 0, {}, 0.2);
  EXPECT_EQ(a.matches, (std::vector<std::pair<int, int>>{{1, 1}}));
  EXPECT_EQ(a.unmatched_tracklets, std::vector<int>{0});
  EXPECT_EQ(a.unmatched_detections, std::vector<int>{0});

  ScoreMatrix motion = ScoreMatrix::Ones(2, 2);
  const Assignment k = FuseAndAssign(app, &motion, 1.0, 1, {0.3, 0.7}, 0.2);
  EXPECT_EQ(k.fused.row(0), app.row(0));  // less confident row keeps no motion
  EXPECT_EQ(k.fused(1, 0), 1.0);

  ScoreMatrix wrong(3, 2);
  wrong.setZero();
  EXPECT_THROW(FuseAndAssign(app, &wrong, 1.0, 0, {}, 0.2), Error);
}

TEST(KalmanTest, ClosedFormConstantVelocity) {
  KalmanFilter k;
  k.Update({0, 0});
  k.Predict();
  k.Update({2, 3});
  const Eigen::Vector2d p = k.Predict();
  EXPECT_NEAR(p.x(), 4.0, 1e-12);
  EXPECT_NEAR(p.y(), 6.0, 1e-12);
  k.Update({4, 6});
  const Eigen::Vector2d q = k.Predict();
  EXPECT_NEAR(q.x(), 6.0, 1e-12);
  EXPECT_NEAR(q.y(), 9.0, 1e-12);
}

TEST(KalmanTest, NoiseFreeTrajectoriesArePredictedExactly) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-4, 4);
  KalmanOptions o;
  o.measurement_noise = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector2d x0(u(rng) + 30, u(rng) + 30), v(u(rng), u(rng));
    KalmanFilter k(o);
    for (int t = 0; t < 40; ++t) {
      const Eigen::Vector2d pred = k.Predict();
      if (k.updates() >= 3) {
        EXPECT_LT((pred - (x0 + t * v)).norm(), 1e-6);
      }
      k.Update(x0 + t * v);
    }
  }
}

TEST(KalmanTest, ScoreIsOneAtThePredictionAndMonotone) {
  const FrameMask at = Box(32, 9, 9, 12, 12);  // centroid (10.5, 10.5)
  const FrameMask near = Box(32, 11, 11, 14, 14), far = Box(32, 20, 20, 23, 23);
  const ScoreMatrix s = KalmanScore({{10.5, 10.5}}, {at, near, far}, 4.5);
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
  EXPECT_GT(s(0, 1), s(0, 2));
  EXPECT_NEAR(s(0, 1), std::exp(-std::hypot(2.0, 2.0) / 4.5), 1e-12);
}

TEST(ScorerTest, ParsesBothSpellings) {
  EXPECT_EQ(ParseScorer("+motion"), Scorer::kMotion);
  EXPECT_EQ(ParseScorer("kalman"), Scorer::kKalman);
  EXPECT_EQ(ParseScorer("appearance"), Scorer::kAppearance);
  EXPECT_THROW(ParseScorer("optical-flow"), Error);
}

// Ground truth with identity-coded embeddings: every scorer must keep ids.
std::vector<std::vector<Detection>> OracleDetections(const Scene& scene) {
  std::vector<std::vector<Detection>> out(scene.num_frames());
  for (int f = 0; f < scene.num_frames(); ++f) {
    for (size_t k = 0; k < scene.instances.size(); ++k) {
      if (scene.instances[k].frames[f].Empty()) continue;
      Detection d;
      d.mask = scene.instances[k].frames[f];
      d.appearance.assign(scene.instances.size(), 0.0);
      d.appearance[k] = 1.0;
      out[f].push_back(std::move(d));
    }
    std::reverse(out[f].begin(), out[f].end());
  }
  return out;
}

TEST(TrackerTest, OracleScorerHasNoIdSwitches) {
  for (Preset p : {Preset::kCrossing, Preset::kOcclusion}) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const Scene scene = RenderScene(MakePresetSpec(p, seed));
      for (Scorer s : {Scorer::kAppearance, Scorer::kKalman}) {
        TrackerConfig cfg;
        cfg.scorer = s;
        const TrackResult r = RunTracker(scene, OracleDetections(scene), cfg, nullptr);
        const TrackingMetrics m = EvaluateTracking(scene, r);
        EXPECT_EQ(m.id_switches, 0) << PresetName(p) << " " << seed;
        EXPECT_DOUBLE_EQ(m.idf1(), 1.0);
        EXPECT_DOUBLE_EQ(m.motsa(), 1.0);
        EXPECT_DOUBLE_EQ(m.mean_iou(), 1.0);
      }
    }
  }
}

TEST(TrackerTest, IdsAreNeverReused) {
  const FrameMask a = Box(16, 2, 2, 6, 6);
  TrackerConfig cfg;
  cfg.persistence = 1;
  OnlineTracker tracker(cfg, nullptr, 16, 16);
  Detection d{a, Unit({1, 1}), 1.0, std::nullopt};
  std::set<int> seen;
  int last = 0;
  for (int f = 0; f < 12; ++f) {
    // Present two frames, absent three: the tracklet retires each gap.
    const bool present = f % 5 < 2;
    const auto out = tracker.Step(f, present ? std::vector<Detection>{d}
                                             : std::vector<Detection>{});
    for (const auto& m : out) {
      if (m.track_id != last) {
        EXPECT_TRUE(seen.insert(m.track_id).second);
      }
      last = m.track_id;
    }
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(TrackerTest, MotionScorerNeedsANetwork) {
  TrackerConfig cfg;
  cfg.scorer = Scorer::kMotion;
  try {
    OnlineTracker t(cfg, nullptr, 8, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kUsage);
  }
}

TEST(TrackerTest, RunsAreDeterministic) {
  PresetOptions o;
  o.equal_colors = true;
  const Scene scene = RenderScene(MakePresetSpec(Preset::kCrossing, 3, o));
  std::vector<std::vector<Detection>> dets;
  for (int f = 0; f < scene.num_frames(); ++f) dets.push_back(GroundTruthDetections(scene, f));
  TrackerConfig cfg;
  cfg.scorer = Scorer::kKalman;
  const TrackResult a = RunTracker(scene, dets, cfg, nullptr);
  const TrackResult b = RunTracker(scene, dets, cfg, nullptr);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.forecast_ious, b.forecast_ious);
}

TEST(MetricsTest, HandBuiltIdentitySwap) {
  Scene scene;
  scene.id = "swap";
  scene.spec.canvas_height = scene.spec.canvas_width = 16;
  scene.frame_indices = {0, 1, 2};
  MaskSequence g0, g1;
  for (int f = 0; f < 3; ++f) {
    g0.frames.push_back(Box(16, 0, 0, 4, 4));
    g1.frames.push_back(Box(16, 8, 8, 12, 12));
  }
  scene.instances = {g0, g1};
  TrackResult r;
  r.height = r.width = 16;
  for (int f = 0; f < 3; ++f) {
    const bool swapped = f == 2;
    r.masks.push_back({f, swapped ? 2 : 1, g0.frames[f]});
    r.masks.push_back({f, swapped ? 1 : 2, g1.frames[f]});
  }
  r.masks.push_back({1, 9, Box(16, 14, 0, 16, 2)});  // false positive
  const TrackingMetrics m = EvaluateTracking(scene, r);
  EXPECT_EQ(m.num_gt, 6);
  EXPECT_EQ(m.tp, 6);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.fn, 0);
  EXPECT_EQ(m.id_switches, 2);
  // Best identity mapping keeps 2 + 2 frames; 6 ground-truth and 7 predicted
  // masks.
  EXPECT_EQ(m.idtp, 4);
  EXPECT_NEAR(m.idf1(), 8.0 / 13.0, 1e-12);
  EXPECT_NEAR(m.motsa(), (6.0 - 1.0 - 2.0) / 6.0, 1e-12);

  const nlohmann::json j = MetricsReport({m, m});
  EXPECT_EQ(j.at("IDSw").get<int>(), 4);
  EXPECT_NEAR(j.at("IDF1").get<double>(), 8.0 / 13.0, 1e-12);
  for (const char* key : {"MOTSA", "mean_iou", "per_scene"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(j.at("per_scene").size(), 2u);
}

TEST(TrackResultTest, TextRoundTripAndErrors) {
  TrackResult r;
  r.height = 8;
  r.width = 6;
  FrameMask m(8, 6);
  m.set(1, 2, true);
  m.set(7, 5, true);
  r.masks.push_back({0, 1, m});
  r.masks.push_back({5, 7, FrameMask(8, 6)});
  EXPECT_EQ(DecodeTrackResult(EncodeTrackResult(r)), r);
  try {
    DecodeTrackResult("TRACKS 8 6\nT 0 1 0:48\nT 1 x 0:48\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kFormat);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(DecodeTrackResult("T 0 1 0:48\n"), Error);
}

}  // namespace
}  // namespace maskmotion
