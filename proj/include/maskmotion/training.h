#ifndef MASKMOTION_TRAINING_H_
#define MASKMOTION_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskmotion/image.h"
#include "maskmotion/losses.h"
#include "maskmotion/mask.h"
#include "maskmotion/motion_net.h"
#include "maskmotion/nn/adam.h"
#include "maskmotion/synthetic_data.h"

namespace maskmotion {

struct TrainConfig {
  float learning_rate = 5e-5f;
  int batch_size = 8;
  int iterations = 2000;
  int n_min = 2;  // history length range, drawn per iteration
  int n_max = 5;
  uint64_t seed = 0;
  // Snapshot every non-p_theta parameter around each step 2 and fail if any
  // of them changes.
  bool verify_isolation = false;
  LossWeights loss;

  void Validate() const;
  nlohmann::json ToJson() const;
};

// One training window at network resolution. `image` is I_t for the target
// frame and is empty when the net does not use images.
struct TrainingExample {
  std::vector<FrameMask> history;
  FrameMask target;
  ImageFrame image;
};

// Draws windows of consecutive emitted frames from scenes, padded to the
// network input side. Windows whose target or last history mask is empty are
// skipped.
class ExampleSampler {
 public:
  ExampleSampler(const std::vector<Scene>& scenes, int input_side,
                 bool with_images);

  std::vector<TrainingExample> Sample(int n, int count,
                                      std::mt19937_64& rng) const;
  // Every valid window with up to `max_history` (at least 2) frames of
  // history, in scene/instance/frame order.
  std::vector<TrainingExample> AllWindows(int max_history) const;

 private:
  struct Track {
    int scene;
    std::vector<FrameMask> masks;
  };
  bool Usable(const Track& t, int start, int n) const;
  TrainingExample Make(const Track& t, int start, int n) const;

  std::vector<Track> tracks_;
  std::vector<std::vector<ImageFrame>> images_;
};

struct IterationReport {
  int iteration = 0;
  int history_length = 0;
  double step1_loss = 0.0;
  double step2_loss = 0.0;
  double dice = 0.0;   // step 2 components
  double focal = 0.0;
};

// Runs the two-step schedule. Step 1 trains the posterior encoder, mask
// encoder, ConvLSTM, fusion, decoder, memory bank and (in trained mode) the
// image encoder on predictions from the posterior latent. Step 2 freezes the
// bank and trains only the prior encoder on predictions from history.
class Trainer {
 public:
  Trainer(MotionNet& net, const TrainConfig& config);

  IterationReport Step(const std::vector<TrainingExample>& batch);
  int isolation_checks() const { return isolation_checks_; }

 private:
  double RunStep(const std::vector<TrainingExample>& batch, PredictMode mode,
                 LossBreakdown* parts);
  void ConfigureStep(PredictMode mode);

  MotionNet& net_;
  TrainConfig config_;
  nn::Adam adam_;
  int iteration_ = 0;
  int isolation_checks_ = 0;
};

using ProgressFn = std::function<void(const IterationReport&)>;

// Trains `net` for config.iterations iterations with a history length drawn
// uniformly from [n_min, n_max] each iteration.
std::vector<IterationReport> TrainModel(MotionNet& net,
                                        const ExampleSampler& sampler,
                                        const TrainConfig& config,
                                        const ProgressFn& progress = nullptr,
                                        int* isolation_checks = nullptr);

std::string LossCurveCsv(const std::vector<IterationReport>& curve);

struct TrainingResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::vector<IterationReport> curve;
  int isolation_checks = 0;
};

// Trains on the dataset's training split and writes checkpoint.bin and
// loss.csv into out_dir. In fixed image-encoder mode the encoder weights
// come from `fixed_image_encoder` when given, otherwise from the seeded
// initialization.
TrainingResult RunTraining(const Dataset& dataset, const NetConfig& net_config,
                           const TrainConfig& config,
                           const std::filesystem::path& out_dir,
                           const MotionNet* fixed_image_encoder = nullptr,
                           const ProgressFn& progress = nullptr);

struct PredictionEval {
  int windows = 0;
  double model_iou = 0.0;
  double copy_last_iou = 0.0;
  double model_boundary_f = 0.0;
  double copy_last_boundary_f = 0.0;
};

// Mean next-frame IoU and boundary F of the network and of the copy-last-mask
// baseline over every window of the scenes.
PredictionEval EvaluatePrediction(const MotionNet& net,
                                  const std::vector<Scene>& scenes);

}  // namespace maskmotion

#endif  // MASKMOTION_TRAINING_H_
