#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "maskmotion/error.h"
#include "maskmotion/mask_io.h"
#include "maskmotion/training.h"

namespace maskmotion {
namespace {

namespace fs = std::filesystem;

NetConfig TinyConfig() {
  NetConfig c;
  c.input_side = 16;
  c.latent_l = 6;
  c.memory_c = 5;
  c.encoder_channels = {2, 3, 4};
  c.lstm_layers = 2;
  return c;
}

TrainConfig FastConfig(int iterations) {
  TrainConfig t;
  t.learning_rate = 1e-3f;
  t.batch_size = 2;
  t.iterations = iterations;
  t.seed = 5;
  return t;
}

std::vector<Scene> Scenes(Preset preset, int count) {
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i) out.push_back(RenderScene(MakePresetSpec(preset, i)));
  return out;
}

std::map<std::string, nn::Tensor> Snapshot(const MotionNet& net) {
  std::map<std::string, nn::Tensor> out;
  for (const auto& p : net.AllParameters()) out[p.name] = p.var->value;
  return out;
}

TEST(TrainConfigTest, RejectsBadValues) {
  TrainConfig t;
  EXPECT_NO_THROW(t.Validate());
  t.n_min = 1;
  EXPECT_THROW(t.Validate(), Error);
  t = TrainConfig();
  t.n_max = 1;
  EXPECT_THROW(t.Validate(), Error);
  t = TrainConfig();
  t.learning_rate = 0.0f;
  EXPECT_THROW(t.Validate(), Error);
  t = TrainConfig();
  t.batch_size = 0;
  EXPECT_THROW(t.Validate(), Error);
}

TEST(ExampleSamplerTest, WindowsSkipEmptyTargets) {
  const std::vector<Scene> scenes = Scenes(Preset::kOcclusion, 2);
  const ExampleSampler sampler(scenes, 16, false);
  int expected = 0;
  for (const auto& scene : scenes) {
    for (const auto& inst : scene.instances) {
      auto visible = [&](int t) {
        return !ResizeWithPadding(inst.frames[t], 16).mask.Empty();
      };
      for (int t = 2; t < scene.num_frames(); ++t) {
        if (visible(t) && visible(t - 1)) ++expected;
      }
    }
  }
  const auto windows = sampler.AllWindows(5);
  EXPECT_EQ(static_cast<int>(windows.size()), expected);
  for (const auto& w : windows) {
    EXPECT_GE(w.history.size(), 2u);
    EXPECT_LE(w.history.size(), 5u);
    EXPECT_FALSE(w.target.Empty());
    EXPECT_EQ(w.target.height(), 16);
    EXPECT_TRUE(w.image.empty());
  }
  std::mt19937_64 rng(1);
  const auto batch = sampler.Sample(4, 6, rng);
  ASSERT_EQ(batch.size(), 6u);
  for (const auto& ex : batch) EXPECT_EQ(ex.history.size(), 4u);
}

TEST(TrainerTest, StepTwoTouchesOnlyThePriorEncoder) {
  NetConfig cfg = TinyConfig();
  MotionNet net(cfg, 3);
  TrainConfig tc = FastConfig(1);
  tc.verify_isolation = true;
  Trainer trainer(net, tc);
  const ExampleSampler sampler(Scenes(Preset::kTranslation, 2), 16, false);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 3; ++i) trainer.Step(sampler.Sample(3, 2, rng));
  EXPECT_EQ(trainer.isolation_checks(), 3);

  // Both steps move their own parameters.
  const auto before = Snapshot(net);
  trainer.Step(sampler.Sample(3, 2, rng));
  const auto after = Snapshot(net);
  for (const char* name : {"prior.fc.weight", "posterior.fc.weight", "memory.entries"}) {
    ASSERT_TRUE(before.count(name)) << name;
    EXPECT_FALSE(before.at(name) == after.at(name)) << name;
  }
}

TEST(TrainerTest, FixedImageEncoderStaysUnchanged) {
  NetConfig cfg = TinyConfig();
  cfg.use_image_refine = true;
  cfg.image_encoder_mode = ImageEncoderMode::kFixed;
  MotionNet net(cfg, 4);
  const auto before = Snapshot(net);
  TrainConfig tc = FastConfig(2);
  tc.verify_isolation = true;
  const ExampleSampler sampler(Scenes(Preset::kTranslation, 2), 16, true);
  TrainModel(net, sampler, tc);
  const auto after = Snapshot(net);
  int checked = 0;
  for (const auto& p : net.group(ParamGroup::kImageEncoder)) {
    EXPECT_TRUE(before.at(p.name) == after.at(p.name)) << p.name;
    ++checked;
  }
  EXPECT_GT(checked, 0);
  EXPECT_FALSE(before.at("decoder.out.weight") == after.at("decoder.out.weight"));
}

TEST(TrainerTest, SameSeedGivesIdenticalWeights) {
  const ExampleSampler sampler(Scenes(Preset::kTranslation, 2), 16, false);
  MotionNet a(TinyConfig(), 9), b(TinyConfig(), 9);
  const auto ca = TrainModel(a, sampler, FastConfig(3));
  const auto cb = TrainModel(b, sampler, FastConfig(3));
  EXPECT_EQ(Snapshot(a), Snapshot(b));
  ASSERT_EQ(ca.size(), 3u);
  for (size_t i = 0; i < ca.size(); ++i) {
    EXPECT_EQ(ca[i].step1_loss, cb[i].step1_loss);
    EXPECT_EQ(ca[i].step2_loss, cb[i].step2_loss);
  }
}

TEST(TrainerTest, RejectsHistoryLongerThanTheNetwork) {
  MotionNet net(TinyConfig(), 1);
  const ExampleSampler sampler(Scenes(Preset::kTranslation, 1), 16, false);
  TrainConfig tc = FastConfig(1);
  tc.n_max = 6;
  EXPECT_THROW(TrainModel(net, sampler, tc), Error);
}

TEST(TrainerTest, LossDecreasesOnTranslation) {
  NetConfig cfg = TinyConfig();
  cfg.input_side = 32;
  cfg.latent_l = 16;
  cfg.encoder_channels = {4, 8, 8};
  MotionNet net(cfg, 11);
  const ExampleSampler sampler(Scenes(Preset::kTranslation, 4), 32, false);
  TrainConfig tc = FastConfig(200);
  tc.batch_size = 4;
  const auto curve = TrainModel(net, sampler, tc);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += curve[i].step1_loss + curve[i].step2_loss;
    tail += curve[curve.size() - 1 - i].step1_loss +
            curve[curve.size() - 1 - i].step2_loss;
  }
  EXPECT_LT(tail, 0.75 * head);
}

TEST(LossCurveCsvTest, HeaderAndOneRowPerIteration) {
  std::vector<IterationReport> curve(4);
  for (int i = 0; i < 4; ++i) {
    curve[i].iteration = i + 1;
    curve[i].step1_loss = 0.5 * i;
  }
  std::istringstream in(LossCurveCsv(curve));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iteration,step1_loss,step2_loss,dice,focal");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows + 1));
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

TEST(RunTrainingTest, WritesLoadableCheckpointAndCurve) {
  const fs::path root = fs::temp_directory_path() /
                        ("maskmotion_train_" + std::to_string(::getpid()));
  fs::remove_all(root);
  MakeBenchmarkSuite(Preset::kTranslation, 5, 2, root / "data");
  const Dataset data = Dataset::Open(root / "data");
  int progress_calls = 0;
  const TrainingResult r =
      RunTraining(data, TinyConfig(), FastConfig(2), root / "run", nullptr,
                  [&](const IterationReport&) { ++progress_calls; });
  EXPECT_EQ(progress_calls, 2);
  EXPECT_TRUE(fs::exists(r.checkpoint));
  const std::string csv = ReadFileBytes(r.loss_csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const auto loaded = MotionNet::LoadCheckpoint(r.checkpoint);
  EXPECT_EQ(loaded->config(), TinyConfig());

  const PredictionEval eval = EvaluatePrediction(*loaded, data.LoadScenes(data.val_indices()));
  EXPECT_GT(eval.windows, 0);
  EXPECT_GT(eval.copy_last_iou, 0.0);
  EXPECT_LE(eval.copy_last_iou, 1.0);
  EXPECT_GE(eval.model_iou, 0.0);
  fs::remove_all(root);
}

}  // namespace
}  // namespace maskmotion
