// Acceptance run: one PASS/FAIL line per criterion AC-1..AC-8.
//
//   maskmotion_acceptance [--work DIR] [--only AC-3,AC-5] [--reuse]
//
// AC-5 and AC-6 use the AC-3 model and train it when it is not cached in the
// work directory.

#include <unistd.h>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <glog/logging.h>

#include "maskmotion/error.h"
#include "maskmotion/image.h"
#include "maskmotion/losses.h"
#include "maskmotion/mask.h"
#include "maskmotion/mask_io.h"
#include "maskmotion/memory_bank.h"
#include "maskmotion/memory_math.h"
#include "maskmotion/motion_net.h"
#include "maskmotion/nn/autograd.h"
#include "maskmotion/report.h"
#include "maskmotion/synthetic_data.h"
#include "maskmotion/tracker.h"
#include "maskmotion/training.h"

namespace maskmotion {
namespace {

namespace fs = std::filesystem;

// Pinned thresholds.
constexpr int kAc1Draws = 10000;
constexpr double kAc1SumTol = 1e-6;
constexpr double kAc1ScaleTol = 1e-9;
constexpr double kAc1Seconds = 10.0;
constexpr double kAc2ValueTol = 1e-6;
constexpr double kAc2GradRelTol = 1e-3;
constexpr double kAc2FdStep = 1e-4;
constexpr int kAc2Instances = 20;
constexpr double kAc2Seconds = 30.0;
constexpr int kAc3Scenes = 200;
constexpr int kAc3Iterations = 2000;
constexpr double kAc3MinIou = 0.70;
constexpr double kAc3MinMargin = 0.10;
constexpr double kAc3Step2Target = 0.25;  // reported, not gating
constexpr double kAc4MaxRegression = 0.02;
constexpr int kAc5Scenes = 50;
constexpr double kAc5MinRate = 0.90;
constexpr int kAc6Scenes = 50;
constexpr double kAc6MinIdswPerCrossing = 1.0;
constexpr double kAc6MinReduction = 0.50;
constexpr int kAc6SweepFrames = 36;
constexpr double kAc7MaxError = 1e-6;
constexpr int kAc8FuzzSequences = 1000;

// Seeds keep the splits of each criterion apart.
constexpr uint64_t kTrainDataSeed = 3;
constexpr uint64_t kTrainSeed = 1;
constexpr uint64_t kAc5SeedBase = 50000;
constexpr uint64_t kAc6SeedBase = 60000;
constexpr uint64_t kAc7SeedBase = 70000;

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;
};

std::string Fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string Fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

class Stopwatch {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

NetConfig AcceptanceNet() {
  NetConfig c;
  c.input_side = 64;
  c.encoder_channels = {8, 16, 16};
  return c;
}

TrainConfig AcceptanceTraining() {
  TrainConfig t;
  t.learning_rate = 1e-3f;
  t.batch_size = 8;
  t.iterations = kAc3Iterations;
  t.seed = kTrainSeed;
  t.verify_isolation = true;
  return t;
}

// ---------------------------------------------------------------------------
// AC-1

Outcome MemoryAlgebra() {
  Stopwatch clock;
  std::mt19937_64 rng(11);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_int_distribution<int> dim_c(1, 16), dim_l(1, 24);
  double worst_sum = 0, worst_scale = 0;
  int onehot_bad = 0;
  for (int draw = 0; draw < kAc1Draws; ++draw) {
    const int c = dim_c(rng), l = dim_l(rng);
    std::vector<float> entries(static_cast<size_t>(c) * l);
    for (auto& v : entries) v = normal(rng);
    for (int i = 0; i < c; ++i) entries[static_cast<size_t>(i) * l] += 1e-3f;  // no zero rows
    std::vector<float> z(l);
    for (auto& v : z) v = normal(rng);
    z[0] += 1e-3f;
    const MemoryBank bank(c, l, entries);

    const AttentionWeights w = bank.Address(z);
    worst_sum = std::max(
        worst_sum, std::abs(std::accumulate(w.weights.begin(), w.weights.end(), 0.0) - 1.0));

    // The latent interface is float; scaling is done at the addressing
    // precision so that αz is the same direction.
    const std::vector<double> ed(entries.begin(), entries.end());
    for (double alpha : {0.5, 3.0}) {
      std::vector<double> zs(l), ws(c);
      for (int k = 0; k < l; ++k) zs[k] = alpha * z[k];
      memory_math::Address<double>(ed, c, l, zs, ws);
      for (int i = 0; i < c; ++i) worst_scale = std::max(worst_scale, std::abs(ws[i] - w.weights[i]));
    }

    const int row = std::uniform_int_distribution<int>(0, c - 1)(rng);
    AttentionWeights one_hot;
    one_hot.weights.assign(c, 0.0);
    one_hot.weights[row] = 1.0;
    const MotionLatent got = bank.Retrieve(one_hot);
    if (!std::equal(got.values.begin(), got.values.end(),
                    entries.begin() + static_cast<size_t>(row) * l)) {
      ++onehot_bad;
    }
  }
  const double seconds = clock.Seconds();
  Outcome o;
  o.pass = worst_sum <= kAc1SumTol && worst_scale <= kAc1ScaleTol && onehot_bad == 0 &&
           seconds < kAc1Seconds;
  o.detail = Fmt("%d draws: max |sum-1| %.2e (<= %.0e), max scale drift %.2e (<= %.0e), "
                 "one-hot mismatches %d, %.2f s (< %.0f s)",
                 kAc1Draws, worst_sum, kAc1SumTol, worst_scale, kAc1ScaleTol, onehot_bad,
                 seconds, kAc1Seconds);
  return o;
}

// ---------------------------------------------------------------------------
// AC-2

FrameMask BlockMask(int side, int row0, int col0, int rows, int cols) {
  std::vector<uint8_t> bits(static_cast<size_t>(side) * side, 0);
  for (int r = row0; r < row0 + rows; ++r)
    for (int c = col0; c < col0 + cols; ++c) bits[static_cast<size_t>(r) * side + c] = 1;
  return FrameMask(side, side, std::move(bits));
}

ProbMask Hard(const FrameMask& m) {
  std::vector<float> p(m.bits().begin(), m.bits().end());
  return ProbMask(m.height(), m.width(), std::move(p));
}

// Direct transcription of the focal term for one pixel.
double FocalPixel(double p, bool fg, double gamma, double alpha) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  const double pt = fg ? p : 1.0 - p;
  const double at = fg ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

double OracleFocal(const ProbMask& p, const FrameMask& t, double gamma, double alpha) {
  double s = 0;
  for (int64_t i = 0; i < p.size(); ++i) s += FocalPixel(p.probs()[i], t.bits()[i], gamma, alpha);
  return s / static_cast<double>(p.size());
}

Outcome LossOracle() {
  Stopwatch clock;
  double worst_value = 0;
  std::vector<std::string> failures;
  auto check = [&](const std::string& name, double got, double want) {
    const double err = std::abs(got - want);
    worst_value = std::max(worst_value, err);
    if (!(err <= kAc2ValueTol)) failures.push_back(Fmt("%s got %.9g want %.9g", name.c_str(), got, want));
  };

  const FrameMask four = BlockMask(8, 1, 1, 2, 2);         // 4 pixels
  const FrameMask disjoint = BlockMask(8, 5, 5, 2, 2);     // 4 pixels, no overlap
  const FrameMask half = BlockMask(8, 1, 2, 2, 2);         // shares 2 pixels with `four`
  check("dice perfect", DiceLoss(Hard(four), four), 0.0);
  check("dice disjoint", DiceLoss(Hard(disjoint), four), 1.0 - 1.0 / 9.0);
  check("dice half", DiceLoss(Hard(half), four), 1.0 - 5.0 / 9.0);

  const FrameMask one_fg(1, 1, {1});
  check("focal p=0.9", FocalLoss(ProbMask(1, 1, 0.9f), one_fg, 2.0, 0.25),
        0.25 * 0.1 * 0.1 * -std::log(0.9));
  check("focal 2.634e-4", FocalLoss(ProbMask(1, 1, 0.9f), one_fg, 2.0, 0.25), 2.634e-4);
  check("focal p=0.5 gamma=0", FocalLoss(ProbMask(8, 8, 0.5f), four, 0.0, 0.5),
        0.5 * std::log(2.0));
  if (!(FocalLoss(Hard(four), four) <= 1e-5)) failures.push_back("focal confident-correct > 1e-5");

  LossWeights w;  // lambda (1, 5)
  check("mask half", MaskLoss(Hard(half), four, w),
        5.0 * (1.0 - 5.0 / 9.0) + OracleFocal(Hard(half), four, 2.0, 0.25));
  LossWeights dice_only = w;
  dice_only.lambda_focal = 0;
  check("mask dice-only", MaskLoss(Hard(half), four, dice_only), 5.0 * (1.0 - 5.0 / 9.0));
  check("mask perfect", MaskLoss(Hard(four), four, w), 0.0);

  // Gradients of the training op against central differences of the loss
  // functions, for each loss alone and combined.
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> prob(0.02f, 0.98f);
  std::bernoulli_distribution coin(0.3);
  double worst_rel = 0;
  int compared = 0;
  struct Variant {
    const char* name;
    double lambda_focal, lambda_dice;
  };
  const Variant variants[] = {{"dice", 0.0, 1.0}, {"focal", 1.0, 0.0}, {"mask", 1.0, 5.0}};
  for (int inst = 0; inst < kAc2Instances; ++inst) {
    std::vector<float> p(64);
    std::vector<uint8_t> t(64);
    for (int i = 0; i < 64; ++i) {
      p[i] = prob(rng);
      t[i] = coin(rng);
    }
    const FrameMask target(8, 8, t);
    for (const Variant& v : variants) {
      LossWeights lw;
      lw.lambda_focal = v.lambda_focal;
      lw.lambda_dice = v.lambda_dice;
      const nn::Var leaf = nn::Leaf(nn::Tensor({1, 8, 8}, p), true);
      nn::Var loss = MaskLossOp(leaf, target, lw, nullptr);
      nn::Backward(loss);
      // Central differences of the oracle loss in double precision.
      auto oracle = [&](const std::vector<double>& q) {
        double focal = 0, inter = 0, sum_q = 0, sum_t = 0;
        for (int j = 0; j < 64; ++j) {
          focal += FocalPixel(q[j], t[j], 2.0, 0.25);
          inter += q[j] * t[j];
          sum_q += q[j];
          sum_t += t[j];
        }
        const double dice = 1.0 - (2 * inter + 1.0) / (sum_q + sum_t + 1.0);
        return v.lambda_focal * focal / 64 + v.lambda_dice * dice;
      };
      for (int i = 0; i < 64; ++i) {
        std::vector<double> up(p.begin(), p.end()), down = up;
        up[i] += kAc2FdStep;
        down[i] -= kAc2FdStep;
        const double numeric = (oracle(up) - oracle(down)) / (2 * kAc2FdStep);
        const double analytic = leaf->grad[i];
        const double rel = std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-6);
        worst_rel = std::max(worst_rel, rel);
        ++compared;
        if (!(rel <= kAc2GradRelTol) && failures.size() < 8) {
          failures.push_back(Fmt("%s grad inst %d px %d analytic %.6g numeric %.6g", v.name,
                                 inst, i, analytic, numeric));
        }
      }
    }
  }
  const double seconds = clock.Seconds();
  Outcome o;
  o.pass = failures.empty() && seconds < kAc2Seconds;
  o.detail = Fmt("values max err %.2e (<= %.0e); %d gradient entries over %d 8x8 instances, "
                 "max rel err %.2e (<= %.0e); %.2f s (< %.0f s)",
                 worst_value, kAc2ValueTol, compared, kAc2Instances, worst_rel, kAc2GradRelTol,
                 seconds, kAc2Seconds);
  o.notes = failures;
  return o;
}

// ---------------------------------------------------------------------------
// Shared training artifacts.

class Workspace {
 public:
  Workspace(fs::path dir, bool reuse) : dir_(std::move(dir)), reuse_(reuse) {
    fs::create_directories(dir_);
  }
  const fs::path& dir() const { return dir_; }

  const Dataset& TranslationData() {
    if (!data_) {
      const fs::path d = dir_ / "translation";
      if (!(reuse_ && fs::exists(d / "manifest.json"))) {
        fs::remove_all(d);
        MakeBenchmarkSuite(Preset::kTranslation, kAc3Scenes, kTrainDataSeed, d);
      }
      data_ = std::make_unique<Dataset>(Dataset::Open(d));
    }
    return *data_;
  }

  struct Trained {
    std::unique_ptr<MotionNet> net;
    TrainingResult result;
    double seconds = 0;
    bool cached = false;
  };

  // Trains (or reloads) a model on the translation training split.
  Trained& Model(const std::string& name, const NetConfig& net_config) {
    auto it = models_.find(name);
    if (it != models_.end()) return it->second;
    Trained t;
    const fs::path run = dir_ / name;
    const fs::path ckpt = run / "checkpoint.bin";
    if (reuse_ && fs::exists(ckpt) && fs::exists(run / "isolation_checks")) {
      t.cached = true;
      t.result.checkpoint = ckpt;
      t.result.loss_csv = run / "loss.csv";
      t.result.curve = ParseLossCurveCsv(ReadFileBytes(t.result.loss_csv));
      t.result.isolation_checks = std::stoi(ReadFileBytes(run / "isolation_checks"));
    } else {
      fs::remove_all(run);
      Stopwatch clock;
      std::fprintf(stderr, "[acceptance] training %s for %d iterations\n", name.c_str(),
                   kAc3Iterations);
      t.result = RunTraining(TranslationData(), net_config, AcceptanceTraining(), run, nullptr,
                             [](const IterationReport& r) {
                               if (r.iteration % 250 == 0) {
                                 std::fprintf(stderr, "[acceptance]   iter %d step2 %.4f\n",
                                              r.iteration, r.step2_loss);
                               }
                             });
      t.seconds = clock.Seconds();
      WriteFileBytes(run / "isolation_checks", std::to_string(t.result.isolation_checks));
    }
    t.net = MotionNet::LoadCheckpoint(ckpt);
    return models_.emplace(name, std::move(t)).first->second;
  }

  const std::vector<Scene>& ValScenes() {
    if (val_.empty()) val_ = TranslationData().LoadScenes(TranslationData().val_indices());
    return val_;
  }

 private:
  fs::path dir_;
  bool reuse_;
  std::unique_ptr<Dataset> data_;
  std::map<std::string, Trained> models_;
  std::vector<Scene> val_;
};

double MeanStep(const std::vector<IterationReport>& curve, bool step2, size_t from, size_t to) {
  double s = 0;
  for (size_t i = from; i < to; ++i) s += step2 ? curve[i].step2_loss : curve[i].step1_loss;
  return to > from ? s / (to - from) : std::nan("");
}

// ---------------------------------------------------------------------------
// AC-3

Outcome LearningCheck(Workspace& ws) {
  auto& m = ws.Model("ac3", AcceptanceNet());
  const PredictionEval e = EvaluatePrediction(*m.net, ws.ValScenes());
  const auto& curve = m.result.curve;
  const bool isolated = m.result.isolation_checks == kAc3Iterations;
  Outcome o;
  o.pass = e.model_iou >= kAc3MinIou && e.model_iou - e.copy_last_iou >= kAc3MinMargin &&
           isolated && static_cast<int>(curve.size()) == kAc3Iterations;
  o.detail = Fmt("%d scenes, %d iterations: val IoU %.4f (>= %.2f), copy-last %.4f, margin "
                 "%.4f (>= %.2f), isolation verified on %d/%d step-2 updates",
                 kAc3Scenes, kAc3Iterations, e.model_iou, kAc3MinIou, e.copy_last_iou,
                 e.model_iou - e.copy_last_iou, kAc3MinMargin, m.result.isolation_checks,
                 kAc3Iterations);
  const size_t n = curve.size();
  if (n >= 100) {
    const double last2 = MeanStep(curve, true, n - 100, n);
    o.notes.push_back(Fmt("info: step-2 loss over the last 100 iterations %.4f (target < %.2f: "
                          "%s, not gating)",
                          last2, kAc3Step2Target, last2 < kAc3Step2Target ? "met" : "missed"));
    const double s1 = MeanStep(curve, false, 0, n), s2 = MeanStep(curve, true, 0, n);
    o.notes.push_back(Fmt("info: mean step-1 loss %.4f vs step-2 loss %.4f over training "
                          "(step-1 <= step-2: %s, not gating)",
                          s1, s2, s1 <= s2 ? "yes" : "no"));
  }
  o.notes.push_back(Fmt("info: %d windows, boundary F %.4f vs copy-last %.4f%s", e.windows,
                        e.model_boundary_f, e.copy_last_boundary_f,
                        m.cached ? ", cached model" : Fmt(", trained in %.0f s", m.seconds).c_str()));
  return o;
}

// ---------------------------------------------------------------------------
// AC-4

Outcome ImageRefinement(Workspace& ws) {
  NetConfig refined_config = AcceptanceNet();
  refined_config.use_image_refine = true;
  refined_config.image_encoder_mode = ImageEncoderMode::kTrained;
  auto& plain = ws.Model("ac3", AcceptanceNet());
  auto& refined = ws.Model("ac4_refined", refined_config);
  const PredictionEval ep = EvaluatePrediction(*plain.net, ws.ValScenes());
  const PredictionEval er = EvaluatePrediction(*refined.net, ws.ValScenes());

  // Refinement must not be a no-op: the image changes the prediction.
  const Scene& scene = ws.ValScenes().front();
  MaskSequence h;
  h.instance_id = "probe";
  for (int f = 0; f < 3; ++f) {
    h.frames.push_back(scene.instances[0].frames[f]);
    h.frame_indices.push_back(f);
  }
  const ProbMask with_image = refined.net->PredictAnySize(h, &scene.images[3]);
  const ImageFrame blank(scene.images[3].height(), scene.images[3].width(), 0.5f);
  const ProbMask with_blank = refined.net->PredictAnySize(h, &blank);
  double change = 0;
  for (int64_t i = 0; i < with_image.size(); ++i) {
    change = std::max(change, static_cast<double>(
                                  std::abs(with_image.probs()[i] - with_blank.probs()[i])));
  }

  const double delta = er.model_boundary_f - ep.model_boundary_f;
  Outcome o;
  o.pass = delta >= -kAc4MaxRegression && change > 0;
  o.detail = Fmt("held-out boundary F refined %.4f vs no refinement %.4f (delta %+.4f, "
                 "regression limit %.2f); image changes output by up to %.3g",
                 er.model_boundary_f, ep.model_boundary_f, delta, kAc4MaxRegression, change);
  o.notes.push_back(Fmt("info: IoU refined %.4f vs no refinement %.4f; strict ordering "
                        "refined >= plain: %s",
                        er.model_iou, ep.model_iou, delta >= 0 ? "yes" : "no"));
  return o;
}

// ---------------------------------------------------------------------------
// AC-5

Outcome MotionDiscrimination(Workspace& ws) {
  auto& m = ws.Model("ac3", AcceptanceNet());
  const int max_history = m.net->config().max_history;
  int events = 0, wins = 0, skipped_no_imposter = 0;
  for (int s = 0; s < kAc5Scenes; ++s) {
    const Scene scene = RenderScene(MakePresetSpec(Preset::kTranslation, kAc5SeedBase + s),
                                    SceneId(s));
    for (int f = 2; f < scene.num_frames(); ++f) {
      std::vector<FrameMask> dets;
      std::vector<int> det_owner;
      for (size_t k = 0; k < scene.instances.size(); ++k) {
        if (scene.instances[k].frames[f].Empty()) continue;
        dets.push_back(scene.instances[k].frames[f]);
        det_owner.push_back(static_cast<int>(k));
      }
      std::vector<MaskSequence> histories;
      std::vector<int> owner;
      for (size_t k = 0; k < scene.instances.size(); ++k) {
        const auto& inst = scene.instances[k];
        if (inst.frames[f].Empty() || inst.frames[f - 1].Empty()) continue;
        MaskSequence h;
        h.instance_id = inst.instance_id;
        for (int t = std::max(0, f - max_history); t < f; ++t) {
          h.frames.push_back(inst.frames[t]);
          h.frame_indices.push_back(scene.frame_indices[t]);
        }
        histories.push_back(h);
        owner.push_back(static_cast<int>(k));
      }
      if (histories.empty() || dets.size() < 2) {
        skipped_no_imposter += static_cast<int>(histories.size());
        continue;
      }
      const ScoreMatrix score = MotionScore(*m.net, histories, dets);
      for (size_t r = 0; r < histories.size(); ++r) {
        int truth = -1;
        double best_imposter = -1;
        for (size_t c = 0; c < dets.size(); ++c) {
          if (det_owner[c] == owner[r]) {
            truth = static_cast<int>(c);
          } else {
            best_imposter = std::max(best_imposter, score(r, c));
          }
        }
        ++events;
        if (score(r, truth) > best_imposter) ++wins;
      }
    }
  }
  const double rate = events ? static_cast<double>(wins) / events : 0.0;
  Outcome o;
  o.pass = events > 0 && rate >= kAc5MinRate;
  o.detail = Fmt("%d translation scenes: true pair scores highest in %d/%d events (%.2f%%, "
                 ">= %.0f%%)",
                 kAc5Scenes, wins, events, 100 * rate, 100 * kAc5MinRate);
  o.notes.push_back(Fmt("info: %d tracklet-frames without an imposter detection not counted",
                        skipped_no_imposter));
  return o;
}

// ---------------------------------------------------------------------------
// AC-6

struct ArmResult {
  TrackingMetrics totals;
};

ArmResult TrackArm(const std::vector<Scene>& scenes, Scorer scorer, const MotionNet* net) {
  TrackerConfig config;
  config.scorer = scorer;
  ArmResult r;
  for (const Scene& scene : scenes) {
    std::vector<std::vector<Detection>> dets;
    for (int f = 0; f < scene.num_frames(); ++f) dets.push_back(GroundTruthDetections(scene, f));
    const TrackResult tr = RunTracker(scene, dets, config, scorer == Scorer::kMotion ? net : nullptr);
    r.totals.Accumulate(EvaluateTracking(scene, tr));
  }
  return r;
}

std::vector<Scene> PresetScenes(Preset preset, uint64_t seed_base, PresetOptions options) {
  std::vector<Scene> out;
  for (int s = 0; s < kAc6Scenes; ++s) {
    out.push_back(RenderScene(MakePresetSpec(preset, seed_base + s, options), SceneId(s)));
  }
  return out;
}

void WriteArmMetrics(const fs::path& dir, Scorer scorer, int stride,
                     const TrackingMetrics& totals) {
  fs::create_directories(dir);
  nlohmann::json j = MetricsReport({totals});
  j["kind"] = "track";
  j["scorer"] = ScorerName(scorer);
  j["preset"] = "crossing";
  j["sample_stride"] = stride;
  WriteFileBytes(dir / "metrics.json", j.dump(2) + "\n");
}

bool NonDecreasing(const std::vector<double>& v) {
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1]) return false;
  return true;
}

Outcome TrackingAblation(Workspace& ws) {
  auto& m = ws.Model("ac3", AcceptanceNet());
  const MotionNet* net = m.net.get();
  PresetOptions equal;
  equal.equal_colors = true;

  const auto crossing = PresetScenes(Preset::kCrossing, kAc6SeedBase, equal);
  const int crossings = static_cast<int>(crossing.size());  // one per crossing scene
  const auto app = TrackArm(crossing, Scorer::kAppearance, net).totals;
  const auto mot = TrackArm(crossing, Scorer::kMotion, net).totals;
  const auto kal = TrackArm(crossing, Scorer::kKalman, net).totals;
  const double per_crossing = static_cast<double>(app.id_switches) / crossings;
  const double reduction =
      app.id_switches > 0 ? 1.0 - static_cast<double>(mot.id_switches) / app.id_switches : 0.0;

  const auto occlusion = PresetScenes(Preset::kOcclusion, kAc6SeedBase + 1000, equal);
  const auto o_app = TrackArm(occlusion, Scorer::kAppearance, net).totals;
  const auto o_mot = TrackArm(occlusion, Scorer::kMotion, net).totals;
  const auto o_kal = TrackArm(occlusion, Scorer::kKalman, net).totals;
  const int kalman_gain = o_app.id_switches - o_kal.id_switches;
  const int motion_gain = o_app.id_switches - o_mot.id_switches;

  const bool baseline_ok = per_crossing >= kAc6MinIdswPerCrossing;
  const bool motion_ok = reduction >= kAc6MinReduction;
  const bool kalman_ok = kalman_gain < motion_gain;

  Outcome o;
  o.pass = baseline_ok && motion_ok && kalman_ok;
  o.detail = Fmt("crossing x%d equal colours: IDSw appearance %d (%.2f/crossing, >= %.0f), "
                 "+motion %d (reduction %.0f%%, >= %.0f%%); occlusion: IDSw reduction "
                 "+kalman %d < +motion %d",
                 crossings, app.id_switches, per_crossing, kAc6MinIdswPerCrossing,
                 mot.id_switches, 100 * reduction, 100 * kAc6MinReduction, kalman_gain,
                 motion_gain);
  o.notes.push_back(Fmt("info: crossing IDF1 appearance %.3f, +motion %.3f, +kalman %.3f (IDSw "
                        "%d); occlusion IDSw appearance %d, +motion %d, +kalman %d",
                        app.idf1(), mot.idf1(), kal.idf1(), kal.id_switches, o_app.id_switches,
                        o_mot.id_switches, o_kal.id_switches));

  // Stride sweep.
  const fs::path sweep_dir = ws.dir() / "ac6_sweep";
  fs::remove_all(sweep_dir);
  std::vector<fs::path> runs;
  std::vector<double> iou_adv, idsw_adv;
  std::string table;
  for (int stride : {1, 3, 5, 7}) {
    PresetOptions opt = equal;
    opt.sample_stride = stride;
    opt.num_frames = kAc6SweepFrames;
    const auto scenes = PresetScenes(Preset::kCrossing, kAc6SeedBase + 2000, opt);
    std::map<Scorer, TrackingMetrics> arms;
    for (Scorer s : {Scorer::kAppearance, Scorer::kMotion, Scorer::kKalman}) {
      arms[s] = TrackArm(scenes, s, net).totals;
      const fs::path run = sweep_dir / (ScorerName(s) + "-stride" + std::to_string(stride));
      WriteArmMetrics(run, s, stride, arms[s]);
      runs.push_back(run);
    }
    const auto& a = arms[Scorer::kAppearance];
    const auto& mm = arms[Scorer::kMotion];
    iou_adv.push_back(mm.forecast_iou() - a.forecast_iou());
    idsw_adv.push_back(a.id_switches - mm.id_switches);
    table += Fmt(" s%d: fIoU %.3f/%.3f/%.3f IDSw %d/%d/%d;", stride, a.forecast_iou(),
                 mm.forecast_iou(), arms[Scorer::kKalman].forecast_iou(), a.id_switches,
                 mm.id_switches, arms[Scorer::kKalman].id_switches);
  }
  WriteReport(runs, sweep_dir / "report");
  const bool iou_mono = NonDecreasing(iou_adv), idsw_mono = NonDecreasing(idsw_adv);
  o.notes.push_back("info: stride sweep (appearance/+motion/+kalman)" + table);
  std::string adv = "stride sweep advantage of +motion over appearance: forecast IoU";
  for (double v : iou_adv) adv += Fmt(" %+.3f", v);
  adv += ", IDSw";
  for (double v : idsw_adv) adv += Fmt(" %+.0f", v);
  adv += iou_mono && idsw_mono ? " -> monotone non-decreasing in stride"
                               : Fmt(" -> FLAG: not monotone in stride (IoU %s, IDSw %s)",
                                     iou_mono ? "monotone" : "non-monotone",
                                     idsw_mono ? "monotone" : "non-monotone");
  o.notes.push_back(adv);
  o.notes.push_back("info: sweep plots in " + (sweep_dir / "report").string());
  return o;
}

// ---------------------------------------------------------------------------
// AC-7

Outcome KalmanExactness() {
  double worst = 0;
  int checked = 0;
  for (int s = 0; s < 50; ++s) {
    for (int stride : {1, 3}) {
      PresetOptions opt;
      opt.sample_stride = stride;
      opt.num_frames = 12 * stride;
      const SceneSpec spec = MakePresetSpec(Preset::kTranslation, kAc7SeedBase + s, opt);
      const Trajectory traj = ComputeTrajectory(spec);
      const auto frames = spec.EmittedFrames();
      for (const auto& centers : traj.centers) {
        KalmanFilter k;  // default process and measurement noise
        for (int64_t t : frames) {
          const Eigen::Vector2d truth(centers[t][0], centers[t][1]);
          const Eigen::Vector2d pred = k.Predict();
          if (k.updates() >= 2) {
            worst = std::max(worst, (pred - truth).norm());
            ++checked;
          }
          k.Update(truth);
        }
      }
    }
  }
  Outcome o;
  o.pass = checked > 0 && worst < kAc7MaxError;
  o.detail = Fmt("%d post-burn-in predictions on noise-free constant-velocity tracks: max "
                 "centre error %.3g px (< %.0e)",
                 checked, worst, kAc7MaxError);
  return o;
}

// ---------------------------------------------------------------------------
// AC-8

bool SameTree(const fs::path& a, const fs::path& b, std::string* diff) {
  std::set<fs::path> files;
  for (const fs::path& root : {a, b}) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
    }
  }
  for (const auto& f : files) {
    if (!fs::exists(a / f) || !fs::exists(b / f) || ReadFileBytes(a / f) != ReadFileBytes(b / f)) {
      *diff = f.string();
      return false;
    }
  }
  return true;
}

Outcome Determinism(Workspace& ws) {
  std::vector<std::string> failures;
  const fs::path root = ws.dir() / "ac8";
  fs::remove_all(root);

  // Dataset: same seed twice, and scenes re-encode to the stored bytes.
  MakeBenchmarkSuite(Preset::kOcclusion, 6, 17, root / "data_a");
  MakeBenchmarkSuite(Preset::kOcclusion, 6, 17, root / "data_b");
  std::string diff;
  if (!SameTree(root / "data_a", root / "data_b", &diff)) failures.push_back("dataset differs: " + diff);
  const Dataset data = Dataset::Open(root / "data_a");
  int scenes_checked = 0;
  for (int i = 0; i < data.size(); ++i) {
    const Scene loaded = data.LoadScene(i);
    const fs::path sdir = root / "data_a" / "scenes" / loaded.id;
    if (EncodeSequences(loaded.instances) != ReadFileBytes(sdir / "masks.txt")) {
      failures.push_back("masks re-encode differs: " + loaded.id);
    }
    const Scene rendered = RenderScene(loaded.spec, loaded.id);
    if (rendered.instances != loaded.instances) failures.push_back("re-render differs: " + loaded.id);
    for (int f = 0; f < loaded.num_frames(); ++f) {
      const fs::path copy = root / "frame.ppm";
      WritePpm(copy, loaded.images[f]);
      const fs::path original = sdir / "frames" / (std::to_string(loaded.frame_indices[f]) + ".ppm");
      if (!fs::exists(original) || ReadFileBytes(copy) != ReadFileBytes(original)) {
        failures.push_back("frame re-encode differs: " + original.string());
        break;
      }
    }
    ++scenes_checked;
  }

  // Training twice with one seed.
  MakeBenchmarkSuite(Preset::kTranslation, 10, 23, root / "train_data");
  const Dataset train_data = Dataset::Open(root / "train_data");
  NetConfig net = AcceptanceNet();
  net.input_side = 32;
  TrainConfig tc = AcceptanceTraining();
  tc.iterations = 30;
  tc.batch_size = 4;
  tc.verify_isolation = false;
  const auto r1 = RunTraining(train_data, net, tc, root / "run_a");
  const auto r2 = RunTraining(train_data, net, tc, root / "run_b");
  if (ReadFileBytes(r1.checkpoint) != ReadFileBytes(r2.checkpoint)) {
    failures.push_back("checkpoints differ between identical training runs");
  }
  if (ReadFileBytes(r1.loss_csv) != ReadFileBytes(r2.loss_csv)) {
    failures.push_back("loss curves differ between identical training runs");
  }
  // Checkpoint round-trip.
  const auto loaded = MotionNet::LoadCheckpoint(r1.checkpoint);
  loaded->SaveCheckpoint(root / "resaved.bin");
  if (ReadFileBytes(root / "resaved.bin") != ReadFileBytes(r1.checkpoint)) {
    failures.push_back("checkpoint load/save is not bitwise stable");
  }

  // Mask-format fuzz.
  std::mt19937_64 rng(31);
  int fuzz_bad = 0;
  for (int i = 0; i < kAc8FuzzSequences; ++i) {
    const int h = std::uniform_int_distribution<int>(1, 40)(rng);
    const int w = std::uniform_int_distribution<int>(1, 40)(rng);
    const int n = std::uniform_int_distribution<int>(2, 6)(rng);
    const int mode = i % 4;  // random density, all zero, all one, sparse
    const double density = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    MaskSequence s;
    s.instance_id = "seq" + std::to_string(i);
    int64_t index = std::uniform_int_distribution<int64_t>(0, 1000)(rng);
    for (int f = 0; f < n; ++f) {
      std::vector<uint8_t> bits(static_cast<size_t>(h) * w);
      for (auto& b : bits) {
        b = mode == 1   ? 0
            : mode == 2 ? 1
            : mode == 3 ? std::bernoulli_distribution(0.02)(rng)
                        : std::bernoulli_distribution(density)(rng);
      }
      s.frames.emplace_back(h, w, std::move(bits));
      s.frame_indices.push_back(index);
      index += std::uniform_int_distribution<int64_t>(1, 7)(rng);
    }
    const std::string text = EncodeSequence(s);
    const MaskSequence back = DecodeSequence(text);
    if (!(back == s) || EncodeSequence(back) != text) ++fuzz_bad;
  }
  if (fuzz_bad) failures.push_back(Fmt("%d fuzzed sequences failed to round-trip", fuzz_bad));

  Outcome o;
  o.pass = failures.empty();
  o.detail = Fmt("dataset regenerated bitwise and %d scenes re-encode to stored bytes; two "
                 "seeded training runs bitwise equal; checkpoint round-trip bitwise; %d/%d "
                 "fuzzed sequences round-trip",
                 scenes_checked, kAc8FuzzSequences - fuzz_bad, kAc8FuzzSequences);
  o.notes = failures;
  return o;
}

// ---------------------------------------------------------------------------

int Main(int argc, char** argv) {
  CLI::App app{"maskmotion acceptance run"};
  std::string work;
  std::string only;
  bool reuse = false;
  app.add_option("--work", work, "Scratch directory (default: a fresh temp directory)");
  app.add_option("--only", only, "Comma-separated subset, e.g. AC-1,AC-7");
  app.add_flag("--reuse", reuse, "Reuse datasets and models already in --work");
  CLI11_PARSE(app, argc, argv);

  const bool temp = work.empty();
  const fs::path dir = temp ? fs::temp_directory_path() /
                                  ("maskmotion_acceptance_" + std::to_string(::getpid()))
                            : fs::path(work);
  Workspace ws(dir, reuse);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC-1", [] { return MemoryAlgebra(); }},
      {"AC-2", [] { return LossOracle(); }},
      {"AC-3", [&] { return LearningCheck(ws); }},
      {"AC-4", [&] { return ImageRefinement(ws); }},
      {"AC-5", [&] { return MotionDiscrimination(ws); }},
      {"AC-6", [&] { return TrackingAblation(ws); }},
      {"AC-7", [] { return KalmanExactness(); }},
      {"AC-8", [&] { return Determinism(ws); }},
  };
  std::set<std::string> selected;
  std::stringstream list(only);
  for (std::string item; std::getline(list, item, ',');) selected.insert(item);

  int failed = 0, ran = 0;
  for (const auto& [name, run] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    ++ran;
    Stopwatch clock;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("aborted: ") + e.what();
    }
    std::printf("%s %s  %s [%.1f s]\n", name.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), clock.Seconds());
    for (const auto& note : o.notes) std::printf("     %s\n", note.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  if (temp) fs::remove_all(dir);
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace maskmotion

int main(int argc, char** argv) {
  google::InitGoogleLogging(argv[0]);
  FLAGS_logtostderr = true;
  return maskmotion::Main(argc, argv);
}
