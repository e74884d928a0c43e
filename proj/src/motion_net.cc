#include "maskmotion/motion_net.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "maskmotion/error.h"
#include "maskmotion/mask_io.h"
#include "maskmotion/nn/ops.h"

namespace maskmotion {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written as little-endian float32");

constexpr char kMagic[8] = {'M', 'A', 'S', 'K', 'M', 'O', 'T', 'N'};
constexpr uint32_t kCheckpointVersion = 1;

using nn::Parameter;
using nn::Tensor;
using nn::Var;

Error ConfigError(const std::string& msg) {
  return Error(ErrorCategory::kConfig, msg);
}

class Initializer {
 public:
  explicit Initializer(uint64_t seed) : rng_(seed) {}

  Var Uniform(std::vector<int> shape, double bound) {
    std::uniform_real_distribution<float> u(-bound, bound);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = u(rng_);
    return nn::Leaf(std::move(t), true);
  }

  static Var Filled(std::vector<int> shape, float v) {
    return nn::Leaf(Tensor(std::move(shape), v), true);
  }

 private:
  std::mt19937_64 rng_;
};

void AddConv(std::vector<Parameter>& group, Initializer& init,
             const std::string& name, std::vector<int> wshape, int fan_in,
             int out_channels, double gain = std::sqrt(6.0)) {
  group.push_back({name + ".weight",
                   init.Uniform(std::move(wshape), gain / std::sqrt(fan_in))});
  group.push_back({name + ".bias", Initializer::Filled({out_channels}, 0.0f)});
}

void AddPatternEncoder(std::vector<Parameter>& group, Initializer& init,
                       const std::string& prefix, const NetConfig& c) {
  const auto& ch = c.encoder_channels;
  int in = 1;
  for (int s = 0; s < 3; ++s) {
    AddConv(group, init, prefix + ".conv" + std::to_string(s + 1),
            {ch[s], in, 3, 3, 3}, in * 27, ch[s]);
    in = ch[s];
  }
  AddConv(group, init, prefix + ".fc", {c.latent_l, ch[2]}, ch[2], c.latent_l,
          std::sqrt(3.0));
}

Var W(const std::vector<Parameter>& g, int i) { return g[i].var; }

}  // namespace

std::string ImageEncoderModeName(ImageEncoderMode mode) {
  switch (mode) {
    case ImageEncoderMode::kTrained: return "trained";
    case ImageEncoderMode::kFixed: return "fixed";
    case ImageEncoderMode::kNone: return "none";
  }
  return "none";
}

ImageEncoderMode ParseImageEncoderMode(const std::string& name) {
  if (name == "trained") return ImageEncoderMode::kTrained;
  if (name == "fixed") return ImageEncoderMode::kFixed;
  if (name == "none") return ImageEncoderMode::kNone;
  throw ConfigError("image-encoder-mode must be trained, fixed or none, got '" +
                    name + "'");
}

std::string ParamGroupName(ParamGroup group) {
  static const char* kNames[kNumParamGroups] = {
      "posterior", "prior", "mask_encoder", "lstm",
      "fusion",    "decoder", "image_encoder"};
  return kNames[static_cast<int>(group)];
}

NetConfig NetConfig::Desk() {
  NetConfig c;
  c.input_side = 64;
  c.encoder_channels = {16, 32, 32};
  return c;
}

void NetConfig::Validate() const {
  if (input_side < 8 || input_side % 8 != 0) {
    throw ConfigError("input-side must be a positive multiple of 8, got " +
                      std::to_string(input_side));
  }
  if (latent_l < 1) throw ConfigError("latent-l must be >= 1");
  if (memory_c < 1) throw ConfigError("memory-c must be >= 1");
  for (int ch : encoder_channels) {
    if (ch < 1) throw ConfigError("encoder channels must be >= 1");
  }
  if (lstm_layers < 1) throw ConfigError("lstm-layers must be >= 1");
  if (max_history < 2) throw ConfigError("max-history must be >= 2");
}

nlohmann::json NetConfig::ToJson() const {
  return {{"input_side", input_side},
          {"latent_l", latent_l},
          {"memory_c", memory_c},
          {"encoder_channels", encoder_channels},
          {"lstm_layers", lstm_layers},
          {"max_history", max_history},
          {"use_image_refine", use_image_refine},
          {"image_encoder_mode", ImageEncoderModeName(image_encoder_mode)}};
}

NetConfig NetConfig::FromJson(const nlohmann::json& j) {
  NetConfig c;
  try {
    c.input_side = j.at("input_side").get<int>();
    c.latent_l = j.at("latent_l").get<int>();
    c.memory_c = j.at("memory_c").get<int>();
    c.encoder_channels = j.at("encoder_channels").get<std::array<int, 3>>();
    c.lstm_layers = j.at("lstm_layers").get<int>();
    c.max_history = j.at("max_history").get<int>();
    c.use_image_refine = j.at("use_image_refine").get<bool>();
    c.image_encoder_mode =
        ParseImageEncoderMode(j.at("image_encoder_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat,
                std::string("network config: ") + e.what());
  }
  c.Validate();
  return c;
}

MotionNet::MotionNet(const NetConfig& config, uint64_t seed) : config_(config) {
  config_.Validate();
  Initializer init(seed);
  const auto& ch = config_.encoder_channels;
  const int hid = ch[2];

  AddPatternEncoder(group(ParamGroup::kPosterior), init, "posterior", config_);
  AddPatternEncoder(group(ParamGroup::kPrior), init, "prior", config_);

  auto& em = group(ParamGroup::kMaskEncoder);
  AddConv(em, init, "mask_encoder.conv1", {ch[0], 1, 3, 3}, 9, ch[0]);
  AddConv(em, init, "mask_encoder.conv2", {ch[1], ch[0], 3, 3}, ch[0] * 9,
          ch[1]);

  auto& lstm = group(ParamGroup::kLstm);
  for (int k = 0; k < config_.lstm_layers; ++k) {
    const int in = (k == 0 ? ch[1] : hid) + hid;
    const std::string name = "lstm.layer" + std::to_string(k + 1);
    lstm.push_back({name + ".weight",
                    init.Uniform({4 * hid, in, 3, 3}, 1.0 / std::sqrt(in * 9))});
    Tensor bias({4 * hid});
    for (int i = hid; i < 2 * hid; ++i) bias[i] = 1.0f;  // forget gate
    lstm.push_back({name + ".bias", nn::Leaf(std::move(bias), true)});
  }

  AddConv(group(ParamGroup::kFusion), init, "fusion.mix",
          {hid, hid + config_.latent_l, 1, 1}, hid + config_.latent_l, hid);

  auto& dec = group(ParamGroup::kDecoder);
  // Transposed weights are [C_in, O, k, k]; each output sees about
  // C_in * k * k / stride^2 inputs.
  AddConv(dec, init, "decoder.up1", {hid, ch[1], 4, 4}, hid * 4, ch[1]);
  AddConv(dec, init, "decoder.up2", {ch[1], ch[0], 4, 4}, ch[1] * 4, ch[0]);
  AddConv(dec, init, "decoder.out", {ch[0], 1, 3, 3}, ch[0] * 9, 1,
          std::sqrt(3.0));

  if (config_.refine_active()) {
    auto& img = group(ParamGroup::kImageEncoder);
    AddConv(img, init, "image_encoder.conv1", {ch[0], 3, 3, 3}, 27, ch[0]);
    AddConv(img, init, "image_encoder.conv2", {ch[1], ch[0], 3, 3}, ch[0] * 9,
            ch[1]);
    AddConv(img, init, "image_encoder.conv3", {ch[1], ch[1], 3, 3}, ch[1] * 9,
            ch[1]);
    AddConv(img, init, "image_encoder.proj", {hid, ch[1], 1, 1}, ch[1], hid,
            std::sqrt(3.0));
  }

  std::mt19937_64 bank_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  bank_ = std::make_unique<MemoryBank>(config_.memory_c, config_.latent_l,
                                       bank_rng());
}

std::vector<Parameter> MotionNet::AllParameters() const {
  std::vector<Parameter> all;
  for (const auto& g : groups_) all.insert(all.end(), g.begin(), g.end());
  all.push_back(bank_->parameters()[0]);
  return all;
}

void MotionNet::CheckFrame(const FrameMask& m) const {
  if (m.height() != config_.input_side || m.width() != config_.input_side) {
    throw Error(ErrorCategory::kShapeMismatch,
                "network expects " + std::to_string(config_.input_side) + "x" +
                    std::to_string(config_.input_side) + " masks, got " +
                    std::to_string(m.height()) + "x" +
                    std::to_string(m.width()) + " (resize with padding first)");
  }
}

Var MotionNet::InputVolume(const std::vector<const FrameMask*>& frames) const {
  const int s = config_.input_side;
  Tensor t({1, static_cast<int>(frames.size()), s, s});
  float* out = t.data();
  for (const FrameMask* m : frames) {
    CheckFrame(*m);
    for (uint8_t b : m->bits()) *out++ = b;
  }
  return nn::Constant(std::move(t));
}

Var MotionNet::PatternEncoder(const std::vector<Var>& w,
                              const std::vector<const FrameMask*>& frames) const {
  Var x = InputVolume(frames);
  for (int s = 0; s < 3; ++s) {
    x = nn::Relu(nn::Conv3d(x, w[2 * s], w[2 * s + 1], {1, 2, 2}, {1, 1, 1}));
  }
  return nn::Linear(nn::GlobalAvgPool(x), w[6], w[7]);
}

namespace {
std::vector<Var> Vars(const std::vector<Parameter>& g) {
  std::vector<Var> v;
  for (const auto& p : g) v.push_back(p.var);
  return v;
}
}  // namespace

Var MotionNet::EncodePosterior(const std::vector<const FrameMask*>& frames) const {
  if (frames.size() < 3 ||
      static_cast<int>(frames.size()) > config_.max_history + 1) {
    throw Error(ErrorCategory::kInvalidArgument,
                "posterior encoder needs 3.." +
                    std::to_string(config_.max_history + 1) +
                    " frames (history + target), got " +
                    std::to_string(frames.size()));
  }
  return PatternEncoder(Vars(group(ParamGroup::kPosterior)), frames);
}

Var MotionNet::EncodePrior(const std::vector<const FrameMask*>& history) const {
  if (history.size() < 2 ||
      static_cast<int>(history.size()) > config_.max_history) {
    throw Error(ErrorCategory::kInvalidArgument,
                "prior encoder needs 2.." + std::to_string(config_.max_history) +
                    " history frames, got " + std::to_string(history.size()));
  }
  return PatternEncoder(Vars(group(ParamGroup::kPrior)), history);
}

Var MotionNet::MaskFeature(const std::vector<const FrameMask*>& history) const {
  const auto& em = group(ParamGroup::kMaskEncoder);
  const auto& lstm = group(ParamGroup::kLstm);
  const int hid = config_.encoder_channels[2];
  const int q = config_.input_side / 4;
  std::vector<Var> h(config_.lstm_layers), c(config_.lstm_layers);
  for (int k = 0; k < config_.lstm_layers; ++k) {
    h[k] = nn::Constant(Tensor({hid, q, q}));
    c[k] = h[k];
  }
  for (const FrameMask* m : history) {
    Var x = InputVolume({m});
    x = nn::Reshape(x, {1, config_.input_side, config_.input_side});
    x = nn::Relu(nn::Conv2d(x, W(em, 0), W(em, 1), 2, 1));
    x = nn::Relu(nn::Conv2d(x, W(em, 2), W(em, 3), 2, 1));
    for (int k = 0; k < config_.lstm_layers; ++k) {
      Var gates = nn::Conv2d(nn::Concat({x, h[k]}), W(lstm, 2 * k),
                             W(lstm, 2 * k + 1), 1, 1);
      Var i = nn::Sigmoid(nn::Slice(gates, 0, hid));
      Var f = nn::Sigmoid(nn::Slice(gates, hid, hid));
      Var g = nn::Tanh(nn::Slice(gates, 2 * hid, hid));
      Var o = nn::Sigmoid(nn::Slice(gates, 3 * hid, hid));
      c[k] = nn::Add(nn::Mul(f, c[k]), nn::Mul(i, g));
      h[k] = nn::Mul(o, nn::Tanh(c[k]));
      x = h[k];
    }
  }
  return h.back();
}

Var MotionNet::ImageFeature(const ImageFrame& image) const {
  const int s = config_.input_side;
  if (image.height() != s || image.width() != s) {
    throw Error(ErrorCategory::kShapeMismatch,
                "network expects " + std::to_string(s) + "x" +
                    std::to_string(s) + " images, got " +
                    std::to_string(image.height()) + "x" +
                    std::to_string(image.width()));
  }
  Tensor t({3, s, s});
  for (int r = 0; r < s; ++r)
    for (int col = 0; col < s; ++col)
      for (int ch = 0; ch < 3; ++ch) t[(ch * s + r) * s + col] = image.at(r, col, ch);
  const auto& g = group(ParamGroup::kImageEncoder);
  Var x = nn::Constant(std::move(t));
  x = nn::Relu(nn::Conv2d(x, W(g, 0), W(g, 1), 2, 1));
  Var stride4 = nn::Relu(nn::Conv2d(x, W(g, 2), W(g, 3), 2, 1));
  Var stride8 = nn::Relu(nn::Conv2d(stride4, W(g, 4), W(g, 5), 2, 1));
  Var merged = nn::Add(nn::UpsampleNearest2x(stride8), stride4);
  return nn::Conv2d(merged, W(g, 6), W(g, 7), 1, 0);
}

Var MotionNet::Forward(const std::vector<const FrameMask*>& frames,
                       const ImageFrame* image, PredictMode mode) const {
  std::vector<const FrameMask*> history = frames;
  Var z;
  if (mode == PredictMode::kTrainStep1) {
    z = EncodePosterior(frames);
    history.pop_back();
  } else {
    z = EncodePrior(history);
  }
  if (config_.refine_active() && image == nullptr) {
    throw Error(ErrorCategory::kInvalidArgument,
                "image refinement is enabled but no image was supplied");
  }
  Var f = MaskFeature(history);
  Var zhat = MemoryReadout(z, *bank_);
  const int q = config_.input_side / 4;
  const auto& fu = group(ParamGroup::kFusion);
  Var x = nn::Relu(nn::Conv2d(
      nn::Concat({f, nn::BroadcastSpatial(zhat, q, q)}), W(fu, 0), W(fu, 1), 1, 0));
  if (config_.refine_active()) x = nn::Add(x, ImageFeature(*image));
  const auto& d = group(ParamGroup::kDecoder);
  x = nn::Relu(nn::ConvTranspose2d(x, W(d, 0), W(d, 1), 2, 1));
  x = nn::Relu(nn::ConvTranspose2d(x, W(d, 2), W(d, 3), 2, 1));
  return nn::Sigmoid(nn::ConvTranspose2d(x, W(d, 4), W(d, 5), 1, 1));
}

ProbMask MotionNet::Predict(const MaskSequence& history,
                            const ImageFrame* image) const {
  history.Validate();
  std::vector<const FrameMask*> frames;
  for (const auto& m : history.frames) frames.push_back(&m);
  Var out = Forward(frames, image, PredictMode::kInfer);
  const int s = config_.input_side;
  std::vector<float> probs(out->value.values().begin(), out->value.values().end());
  for (auto& p : probs) p = std::clamp(p, 0.0f, 1.0f);
  return ProbMask(s, s, std::move(probs));
}

ProbMask MotionNet::PredictAnySize(const MaskSequence& history,
                                   const ImageFrame* image) const {
  history.Validate();
  const int s = config_.input_side;
  MaskSequence padded = history;
  PaddingTransform t;
  for (auto& m : padded.frames) {
    PaddedMask p = ResizeWithPadding(m, s);
    m = std::move(p.mask);
    t = p.transform;
  }
  ImageFrame padded_image;
  if (image != nullptr) {
    if (image->height() != history.height() || image->width() != history.width()) {
      throw Error(ErrorCategory::kShapeMismatch,
                  "image and mask sizes differ");
    }
    padded_image = ResizeImageWithPadding(*image, s);
  }
  return UnpadProbs(Predict(padded, image ? &padded_image : nullptr), t);
}

void MotionNet::CopyImageEncoderFrom(const MotionNet& other) {
  auto& dst = group(ParamGroup::kImageEncoder);
  const auto& src = other.group(ParamGroup::kImageEncoder);
  if (dst.size() != src.size()) {
    throw ConfigError("image encoder layouts differ");
  }
  for (size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].var->value.shape() != src[i].var->value.shape()) {
      throw ConfigError("image encoder parameter " + dst[i].name +
                        " has shape " + src[i].var->value.ShapeString() +
                        " in the source, expected " +
                        dst[i].var->value.ShapeString());
    }
    dst[i].var->value = src[i].var->value;
  }
}

void MotionNet::SaveCheckpoint(const std::filesystem::path& path) const {
  const auto params = AllParameters();
  nlohmann::json header;
  header["format"] = "maskmotion-checkpoint";
  header["config"] = config_.ToJson();
  header["bank_frozen"] = bank_->frozen();
  for (const auto& p : params) {
    header["params"].push_back({{"name", p.name}, {"shape", p.var->value.shape()}});
  }
  const std::string text = header.dump();
  std::string bytes(kMagic, sizeof(kMagic));
  const uint32_t version = kCheckpointVersion;
  const uint64_t length = text.size();
  bytes.append(reinterpret_cast<const char*>(&version), sizeof(version));
  bytes.append(reinterpret_cast<const char*>(&length), sizeof(length));
  bytes += text;
  for (const auto& p : params) {
    bytes.append(reinterpret_cast<const char*>(p.var->value.data()),
                 p.var->value.numel() * sizeof(float));
  }
  WriteFileBytes(path, bytes);
}

namespace {

struct CheckpointContents {
  nlohmann::json header;
  std::string bytes;
  size_t data_offset = 0;
};

CheckpointContents ReadCheckpointFile(const std::filesystem::path& path) {
  CheckpointContents c;
  c.bytes = ReadFileBytes(path);
  auto fail = [&](const std::string& msg) {
    return Error(ErrorCategory::kFormat, path.string() + ": " + msg);
  };
  constexpr size_t kFixed = sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t);
  if (c.bytes.size() < kFixed ||
      std::memcmp(c.bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw fail("not a checkpoint (bad magic)");
  }
  uint32_t version;
  uint64_t length;
  std::memcpy(&version, c.bytes.data() + sizeof(kMagic), sizeof(version));
  std::memcpy(&length, c.bytes.data() + sizeof(kMagic) + sizeof(version),
              sizeof(length));
  if (version != kCheckpointVersion) {
    throw fail("unsupported checkpoint version " + std::to_string(version));
  }
  if (length > c.bytes.size() - kFixed) throw fail("truncated header");
  try {
    c.header = nlohmann::json::parse(c.bytes.substr(kFixed, length));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad header: ") + e.what());
  }
  c.data_offset = kFixed + length;
  return c;
}

}  // namespace

NetConfig MotionNet::ReadCheckpointConfig(const std::filesystem::path& path) {
  return NetConfig::FromJson(ReadCheckpointFile(path).header.at("config"));
}

void MotionNet::LoadWeights(const std::filesystem::path& path) {
  CheckpointContents c = ReadCheckpointFile(path);
  const NetConfig stored = NetConfig::FromJson(c.header.at("config"));
  if (!(stored == config_)) {
    throw ConfigError(path.string() + ": incompatible checkpoint: stored config " +
                      stored.ToJson().dump() + " vs expected " +
                      config_.ToJson().dump());
  }
  auto params = AllParameters();
  const auto& entries = c.header.at("params");
  if (entries.size() != params.size()) {
    throw Error(ErrorCategory::kFormat, path.string() + ": parameter count " +
                                            std::to_string(entries.size()) +
                                            ", expected " +
                                            std::to_string(params.size()));
  }
  size_t offset = c.data_offset;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& v = params[i].var->value;
    if (entries[i].at("name").get<std::string>() != params[i].name ||
        entries[i].at("shape").get<std::vector<int>>() != v.shape()) {
      throw Error(ErrorCategory::kFormat,
                  path.string() + ": unexpected parameter " +
                      entries[i].dump() + " at position " + std::to_string(i));
    }
    const size_t n = v.numel() * sizeof(float);
    if (offset + n > c.bytes.size()) {
      throw Error(ErrorCategory::kFormat, path.string() + ": truncated data");
    }
    std::memcpy(v.data(), c.bytes.data() + offset, n);
    offset += n;
  }
  if (offset != c.bytes.size()) {
    throw Error(ErrorCategory::kFormat, path.string() + ": trailing bytes");
  }
  bank_->SetFrozen(c.header.at("bank_frozen").get<bool>());
}

std::unique_ptr<MotionNet> MotionNet::LoadCheckpoint(
    const std::filesystem::path& path) {
  auto net = std::make_unique<MotionNet>(ReadCheckpointConfig(path), 0);
  net->LoadWeights(path);
  return net;
}

ProbMask DownsampleMask(const ProbMask& mask, int stride) {
  if (stride < 1 || mask.height() % stride != 0 || mask.width() % stride != 0) {
    throw Error(ErrorCategory::kInvalidArgument,
                "mask " + std::to_string(mask.height()) + "x" +
                    std::to_string(mask.width()) +
                    " is not divisible by stride " + std::to_string(stride));
  }
  const int h = mask.height() / stride, w = mask.width() / stride;
  std::vector<float> out(static_cast<size_t>(h) * w, 0.0f);
  const float inv = 1.0f / (stride * stride);
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      out[(r / stride) * w + c / stride] += mask.at(r, c) * inv;
    }
  for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
  return ProbMask(h, w, std::move(out));
}

Var ConcatMaskAttention(const Var& features, const ProbMask& mask) {
  if (features->value.rank() != 3) {
    throw Error(ErrorCategory::kShapeMismatch,
                "features must be [C,H,W], got " + features->value.ShapeString());
  }
  const int h = features->value.dim(1), w = features->value.dim(2);
  if (mask.height() % h != 0 || mask.width() / w != mask.height() / h ||
      mask.width() % w != 0) {
    throw Error(ErrorCategory::kShapeMismatch,
                "mask " + std::to_string(mask.height()) + "x" +
                    std::to_string(mask.width()) +
                    " does not reduce to feature grid " + std::to_string(h) +
                    "x" + std::to_string(w));
  }
  const ProbMask small = DownsampleMask(mask, mask.height() / h);
  Tensor t({1, h, w},
           std::vector<float>(small.probs().begin(), small.probs().end()));
  return nn::Concat({features, nn::Constant(std::move(t))});
}

}  // namespace maskmotion
