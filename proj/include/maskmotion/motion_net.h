#ifndef MASKMOTION_MOTION_NET_H_
#define MASKMOTION_MOTION_NET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskmotion/image.h"
#include "maskmotion/mask.h"
#include "maskmotion/memory_bank.h"
#include "maskmotion/nn/autograd.h"

namespace maskmotion {

enum class ImageEncoderMode { kTrained, kFixed, kNone };

std::string ImageEncoderModeName(ImageEncoderMode mode);
ImageEncoderMode ParseImageEncoderMode(const std::string& name);

struct NetConfig {
  int input_side = 384;
  int latent_l = MemoryBank::kDefaultLength;
  int memory_c = MemoryBank::kDefaultSize;
  // Widths of the three encoder stages. The mask encoder ends at the second
  // width; the ConvLSTM and the fused feature use the third.
  std::array<int, 3> encoder_channels = {32, 64, 128};
  int lstm_layers = 3;
  int max_history = 5;
  bool use_image_refine = false;
  ImageEncoderMode image_encoder_mode = ImageEncoderMode::kNone;

  // Small network for 64x64 synthetic scenes on a CPU.
  static NetConfig Desk();

  void Validate() const;
  nlohmann::json ToJson() const;
  static NetConfig FromJson(const nlohmann::json& j);

  bool refine_active() const {
    return use_image_refine && image_encoder_mode != ImageEncoderMode::kNone;
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

enum class PredictMode {
  kTrainStep1,  // posterior encoder on history + target, target is last frame
  kTrainStep2,  // prior encoder on history only
  kInfer,       // as step 2, without a tape
};

// Parameter groups, named after the modules of the network.
enum class ParamGroup {
  kPosterior,     // q_phi
  kPrior,         // p_theta
  kMaskEncoder,   // E_m
  kLstm,          // L
  kFusion,        // latent/feature mixing
  kDecoder,       // D_m
  kImageEncoder,  // E_i and its projection
};
inline constexpr int kNumParamGroups = 7;

std::string ParamGroupName(ParamGroup group);

// Next-frame mask predictor for one instance. Masks enter as single-channel
// {0,1} grids of size input_side; callers pad first (ResizeWithPadding).
class MotionNet {
 public:
  MotionNet(const NetConfig& config, uint64_t seed);

  const NetConfig& config() const { return config_; }
  MemoryBank& bank() { return *bank_; }
  const MemoryBank& bank() const { return *bank_; }

  std::vector<nn::Parameter>& group(ParamGroup g) {
    return groups_[static_cast<int>(g)];
  }
  const std::vector<nn::Parameter>& group(ParamGroup g) const {
    return groups_[static_cast<int>(g)];
  }
  // Every parameter including the memory bank, in checkpoint order.
  std::vector<nn::Parameter> AllParameters() const;

  // Latent of q_phi over history + target (at least 3 frames).
  nn::Var EncodePosterior(const std::vector<const FrameMask*>& frames) const;
  // Latent of p_theta over history only (2..max_history frames).
  nn::Var EncodePrior(const std::vector<const FrameMask*>& history) const;

  // Probability map [1, side, side]. In kTrainStep1 the last frame of
  // `frames` is the target and is seen only by the posterior encoder.
  // `image` is I_t and is required when refinement is active.
  nn::Var Forward(const std::vector<const FrameMask*>& frames,
                  const ImageFrame* image, PredictMode mode) const;

  // Inference on a history-only sequence already at input_side.
  ProbMask Predict(const MaskSequence& history,
                   const ImageFrame* image = nullptr) const;
  // Inference at any resolution: pads history (and image) to input_side,
  // predicts, and maps the result back.
  ProbMask PredictAnySize(const MaskSequence& history,
                          const ImageFrame* image = nullptr) const;

  // Copies image-encoder weights from another network with the same
  // encoder widths (used to supply externally trained fixed weights).
  void CopyImageEncoderFrom(const MotionNet& other);

  void SaveCheckpoint(const std::filesystem::path& path) const;
  // Loads weights into this network; rejects checkpoints whose NetConfig
  // differs from config().
  void LoadWeights(const std::filesystem::path& path);
  static std::unique_ptr<MotionNet> LoadCheckpoint(
      const std::filesystem::path& path);
  // Reads only the embedded config.
  static NetConfig ReadCheckpointConfig(const std::filesystem::path& path);

 private:
  struct LstmLayer {
    nn::Var weight;
    nn::Var bias;
  };

  nn::Var InputVolume(const std::vector<const FrameMask*>& frames) const;
  nn::Var PatternEncoder(const std::vector<nn::Var>& w,
                         const std::vector<const FrameMask*>& frames) const;
  nn::Var MaskFeature(const std::vector<const FrameMask*>& history) const;
  nn::Var ImageFeature(const ImageFrame& image) const;
  void CheckFrame(const FrameMask& m) const;

  NetConfig config_;
  std::unique_ptr<MemoryBank> bank_;
  std::array<std::vector<nn::Parameter>, kNumParamGroups> groups_;
};

// Mask-as-attention hook: average-pools a predicted mask to the spatial size
// of a host feature map ([C, H, W]) and appends it as an extra channel.
// The mask side must be an integer multiple of H and W.
ProbMask DownsampleMask(const ProbMask& mask, int stride);
nn::Var ConcatMaskAttention(const nn::Var& features, const ProbMask& mask);

}  // namespace maskmotion

#endif  // MASKMOTION_MOTION_NET_H_
