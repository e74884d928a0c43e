#include "maskmotion/training.h"

#include <cmath>
#include <cstdio>

#include <glog/logging.h>

#include "maskmotion/error.h"
#include "maskmotion/mask_io.h"

namespace maskmotion {
namespace {

namespace fs = std::filesystem;

bool IsPrior(const nn::Parameter& p) { return p.name.rfind("prior.", 0) == 0; }

std::vector<const FrameMask*> Pointers(const TrainingExample& ex,
                                       bool with_target) {
  std::vector<const FrameMask*> out;
  for (const auto& m : ex.history) out.push_back(&m);
  if (with_target) out.push_back(&ex.target);
  return out;
}

}  // namespace

void TrainConfig::Validate() const {
  auto fail = [](const std::string& msg) { return Error(ErrorCategory::kConfig, msg); };
  if (!(learning_rate > 0)) throw fail("learning-rate must be > 0");
  if (batch_size < 1) throw fail("batch-size must be >= 1");
  if (iterations < 0) throw fail("iterations must be >= 0");
  if (n_min < 2 || n_max < n_min) {
    throw fail("history range must satisfy 2 <= n-min <= n-max, got [" +
               std::to_string(n_min) + ", " + std::to_string(n_max) + "]");
  }
  loss.Validate();
}

nlohmann::json TrainConfig::ToJson() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"iterations", iterations},
          {"n_range", {n_min, n_max}},
          {"seed", seed},
          {"verify_isolation", verify_isolation},
          {"lambda_focal", loss.lambda_focal},
          {"lambda_dice", loss.lambda_dice},
          {"focal_gamma", loss.focal_gamma},
          {"focal_alpha", loss.focal_alpha}};
}

ExampleSampler::ExampleSampler(const std::vector<Scene>& scenes, int input_side,
                               bool with_images) {
  for (size_t s = 0; s < scenes.size(); ++s) {
    const Scene& scene = scenes[s];
    for (const auto& inst : scene.instances) {
      Track t;
      t.scene = static_cast<int>(s);
      for (const auto& m : inst.frames) {
        t.masks.push_back(ResizeWithPadding(m, input_side).mask);
      }
      tracks_.push_back(std::move(t));
    }
    std::vector<ImageFrame> imgs;
    if (with_images) {
      for (const auto& img : scene.images) {
        imgs.push_back(ResizeImageWithPadding(img, input_side));
      }
    }
    images_.push_back(std::move(imgs));
  }
  if (tracks_.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "no instances to sample from");
  }
}

bool ExampleSampler::Usable(const Track& t, int start, int n) const {
  return start >= 0 && start + n < static_cast<int>(t.masks.size()) &&
         !t.masks[start + n].Empty() && !t.masks[start + n - 1].Empty();
}

TrainingExample ExampleSampler::Make(const Track& t, int start, int n) const {
  TrainingExample ex;
  ex.history.assign(t.masks.begin() + start, t.masks.begin() + start + n);
  ex.target = t.masks[start + n];
  const auto& imgs = images_[t.scene];
  if (!imgs.empty()) ex.image = imgs[start + n];
  return ex;
}

std::vector<TrainingExample> ExampleSampler::Sample(int n, int count,
                                                    std::mt19937_64& rng) const {
  std::vector<TrainingExample> out;
  std::uniform_int_distribution<size_t> pick(0, tracks_.size() - 1);
  int misses = 0;
  while (static_cast<int>(out.size()) < count) {
    const Track& t = tracks_[pick(rng)];
    const int windows = static_cast<int>(t.masks.size()) - n;
    if (windows > 0) {
      const int start = std::uniform_int_distribution<int>(0, windows - 1)(rng);
      if (Usable(t, start, n)) {
        out.push_back(Make(t, start, n));
        continue;
      }
    }
    if (++misses > 1000 * count) {
      throw Error(ErrorCategory::kInvalidArgument,
                  "no usable training window with " + std::to_string(n) +
                      " history frames");
    }
  }
  return out;
}

std::vector<TrainingExample> ExampleSampler::AllWindows(int max_history) const {
  std::vector<TrainingExample> out;
  for (const Track& t : tracks_) {
    for (int target = 2; target < static_cast<int>(t.masks.size()); ++target) {
      const int n = std::min(target, max_history);
      if (Usable(t, target - n, n)) out.push_back(Make(t, target - n, n));
    }
  }
  return out;
}

Trainer::Trainer(MotionNet& net, const TrainConfig& config)
    : net_(net),
      config_(config),
      adam_(nn::AdamOptions{.learning_rate = config.learning_rate}) {
  config_.Validate();
}

void Trainer::ConfigureStep(PredictMode mode) {
  const bool step1 = mode == PredictMode::kTrainStep1;
  for (int g = 0; g < kNumParamGroups; ++g) {
    const auto group = static_cast<ParamGroup>(g);
    bool trainable;
    switch (group) {
      case ParamGroup::kPrior:
        trainable = !step1;
        break;
      case ParamGroup::kImageEncoder:
        trainable = step1 && net_.config().image_encoder_mode ==
                                 ImageEncoderMode::kTrained;
        break;
      default:
        trainable = step1;
    }
    nn::SetTrainable(net_.group(group), trainable);
    nn::ZeroGrad(net_.group(group));
  }
  net_.bank().SetFrozen(!step1);
  nn::ZeroGrad(net_.bank().parameters());
}

double Trainer::RunStep(const std::vector<TrainingExample>& batch,
                        PredictMode mode, LossBreakdown* parts) {
  ConfigureStep(mode);
  const bool step1 = mode == PredictMode::kTrainStep1;
  const float seed = 1.0f / static_cast<float>(batch.size());
  LossBreakdown sum{};
  for (const auto& ex : batch) {
    nn::Var probs = net_.Forward(Pointers(ex, step1),
                                 ex.image.empty() ? nullptr : &ex.image, mode);
    LossBreakdown b;
    nn::Var loss = MaskLossOp(probs, ex.target, config_.loss, &b);
    nn::Backward(loss, seed);
    sum.total += b.total;
    sum.dice += b.dice;
    sum.focal += b.focal;
  }
  auto params = net_.AllParameters();
  adam_.Step(params);
  if (step1) {
    const int repaired = net_.bank().GuardRows();
    LOG_IF(WARNING, repaired > 0)
        << "iteration " << iteration_ << ": re-normalized " << repaired
        << " memory rows";
  }
  const double inv = 1.0 / batch.size();
  if (parts) *parts = {sum.total * inv, sum.dice * inv, sum.focal * inv};
  return sum.total * inv;
}

IterationReport Trainer::Step(const std::vector<TrainingExample>& batch) {
  if (batch.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "empty training batch");
  }
  ++iteration_;
  IterationReport report;
  report.iteration = iteration_;
  report.history_length = static_cast<int>(batch.front().history.size());
  try {
    report.step1_loss = RunStep(batch, PredictMode::kTrainStep1, nullptr);

    std::vector<nn::Tensor> frozen;
    if (config_.verify_isolation) {
      for (const auto& p : net_.AllParameters()) {
        if (!IsPrior(p)) frozen.push_back(p.var->value);
      }
    }
    LossBreakdown parts;
    report.step2_loss = RunStep(batch, PredictMode::kTrainStep2, &parts);
    report.dice = parts.dice;
    report.focal = parts.focal;
    if (config_.verify_isolation) {
      size_t i = 0;
      for (const auto& p : net_.AllParameters()) {
        if (IsPrior(p)) continue;
        if (!(p.var->value == frozen[i++])) {
          throw Error(ErrorCategory::kInternal,
                      "step 2 changed parameter " + p.name);
        }
      }
      ++isolation_checks_;
    }
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::kNumeric) throw;
    throw Error(ErrorCategory::kNumeric,
                "training aborted at iteration " + std::to_string(iteration_) +
                    " (history " + std::to_string(report.history_length) +
                    "): " + e.what());
  }
  return report;
}

std::vector<IterationReport> TrainModel(MotionNet& net,
                                        const ExampleSampler& sampler,
                                        const TrainConfig& config,
                                        const ProgressFn& progress,
                                        int* isolation_checks) {
  config.Validate();
  if (config.n_max > net.config().max_history) {
    throw Error(ErrorCategory::kConfig,
                "n-max " + std::to_string(config.n_max) +
                    " exceeds the network's max history " +
                    std::to_string(net.config().max_history));
  }
  Trainer trainer(net, config);
  std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ULL + 17);
  std::vector<IterationReport> curve;
  curve.reserve(config.iterations);
  for (int it = 0; it < config.iterations; ++it) {
    const int n = std::uniform_int_distribution<int>(config.n_min, config.n_max)(rng);
    const auto batch = sampler.Sample(n, config.batch_size, rng);
    curve.push_back(trainer.Step(batch));
    if (progress) progress(curve.back());
  }
  if (isolation_checks) *isolation_checks = trainer.isolation_checks();
  return curve;
}

std::string LossCurveCsv(const std::vector<IterationReport>& curve) {
  std::string out = "iteration,step1_loss,step2_loss,dice,focal\n";
  char line[160];
  for (const auto& r : curve) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", r.iteration,
                  r.step1_loss, r.step2_loss, r.dice, r.focal);
    out += line;
  }
  return out;
}

TrainingResult RunTraining(const Dataset& dataset, const NetConfig& net_config,
                           const TrainConfig& config, const fs::path& out_dir,
                           const MotionNet* fixed_image_encoder,
                           const ProgressFn& progress) {
  config.Validate();
  if (dataset.train_indices().empty()) {
    throw Error(ErrorCategory::kInvalidArgument,
                dataset.dir().string() + ": training split is empty");
  }
  MotionNet net(net_config, config.seed);
  if (fixed_image_encoder != nullptr) {
    net.CopyImageEncoderFrom(*fixed_image_encoder);
  }
  const std::vector<Scene> scenes = dataset.LoadScenes(dataset.train_indices());
  const ExampleSampler sampler(scenes, net_config.input_side,
                               net_config.refine_active());
  TrainingResult result;
  result.curve = TrainModel(net, sampler, config, progress,
                            &result.isolation_checks);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw Error(ErrorCategory::kIo,
                out_dir.string() + ": cannot create directory: " + ec.message());
  }
  result.checkpoint = out_dir / "checkpoint.bin";
  result.loss_csv = out_dir / "loss.csv";
  net.SaveCheckpoint(result.checkpoint);
  WriteFileBytes(result.loss_csv, LossCurveCsv(result.curve));
  return result;
}

PredictionEval EvaluatePrediction(const MotionNet& net,
                                  const std::vector<Scene>& scenes) {
  const ExampleSampler sampler(scenes, net.config().input_side,
                               net.config().refine_active());
  PredictionEval eval;
  for (const auto& ex : sampler.AllWindows(net.config().max_history)) {
    nn::Var probs = net.Forward(Pointers(ex, false),
                                ex.image.empty() ? nullptr : &ex.image,
                                PredictMode::kInfer);
    const int s = net.config().input_side;
    std::vector<float> p(probs->value.values().begin(), probs->value.values().end());
    const FrameMask pred = Binarize(ProbMask(s, s, std::move(p)));
    eval.model_iou += MaskIou(pred, ex.target);
    eval.copy_last_iou += MaskIou(ex.history.back(), ex.target);
    eval.model_boundary_f += BoundaryFScore(pred, ex.target);
    eval.copy_last_boundary_f += BoundaryFScore(ex.history.back(), ex.target);
    ++eval.windows;
  }
  if (eval.windows > 0) {
    eval.model_iou /= eval.windows;
    eval.copy_last_iou /= eval.windows;
    eval.model_boundary_f /= eval.windows;
    eval.copy_last_boundary_f /= eval.windows;
  }
  return eval;
}

}  // namespace maskmotion
