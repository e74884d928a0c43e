#ifndef MASKMOTION_SYNTHETIC_DATA_H_
#define MASKMOTION_SYNTHETIC_DATA_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskmotion/image.h"
#include "maskmotion/mask.h"

namespace maskmotion {

enum class ShapeKind { kDisk, kRectangle, kBlob };

using Color = std::array<float, 3>;

// One moving object. Coordinates are in pixels with (0, 0) at the top-left
// corner of the canvas; a pixel belongs to a shape when its centre does.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::kDisk;
  double size = 6.0;    // radius, or half-width for rectangles
  double aspect = 1.0;  // rectangle half-height = size * aspect
  double x0 = 0.0, y0 = 0.0;
  double vx = 0.0, vy = 0.0;  // px per raw frame
  double velocity_noise = 0.0;  // std-dev of the per-frame velocity walk
  double deform_rate = 0.0;     // blob boundary phase speed, rad per frame
  int depth = 0;                // larger is nearer the camera
  Color color = {1.0f, 0.0f, 0.0f};
};

// Static opaque axis-aligned box covering rows [row0, row1) and columns
// [col0, col1).
struct OccluderSpec {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  int depth = 100;
  Color color = {0.2f, 0.2f, 0.2f};
};

struct SceneSpec {
  int canvas_height = 64;
  int canvas_width = 64;
  std::vector<ShapeSpec> shapes;
  std::vector<OccluderSpec> occluders;
  int num_frames = 12;  // raw frames before subsampling
  int sample_stride = 1;
  uint64_t seed = 0;
  double background_noise = 0.03;

  // Throws kInvalidArgument. Shapes must start with their centre inside the
  // canvas.
  void Validate() const;
  // Raw frame indices that survive subsampling: 0, s, 2s, ...
  std::vector<int64_t> EmittedFrames() const;

  nlohmann::json ToJson() const;
  static SceneSpec FromJson(const nlohmann::json& j);
};

// A rendered video: images and per-instance visible masks on the emitted
// frames. instances[k] belongs to spec.shapes[k] and keeps its id through
// full occlusion (empty masks).
struct Scene {
  std::string id;
  SceneSpec spec;
  std::vector<int64_t> frame_indices;
  std::vector<ImageFrame> images;
  std::vector<MaskSequence> instances;

  int num_frames() const { return static_cast<int>(frame_indices.size()); }
};

// Centre of shape k at raw frame t, including the velocity walk.
struct Trajectory {
  std::vector<std::vector<std::array<double, 2>>> centers;  // [shape][t]
};
Trajectory ComputeTrajectory(const SceneSpec& spec);

Scene RenderScene(const SceneSpec& spec, const std::string& id = "scene");

enum class Preset { kTranslation, kCrossing, kOcclusion, kSparse, kDeform };

std::string PresetName(Preset preset);
Preset ParsePreset(const std::string& name);

struct PresetOptions {
  bool equal_colors = false;  // all shapes share one colour
  int sample_stride = 0;      // 0 keeps the preset default
  int num_frames = 0;         // 0 keeps the preset default
  int canvas = 64;

  nlohmann::json ToJson() const;
  static PresetOptions FromJson(const nlohmann::json& j);
};

SceneSpec MakePresetSpec(Preset preset, uint64_t seed,
                         const PresetOptions& options = {});

// Writes manifest.json, scenes/<id>/masks.txt and scenes/<id>/frames/<t>.ppm.
// The first ceil(0.8 * count) scenes form the training split.
void MakeBenchmarkSuite(Preset preset, int count, uint64_t seed,
                        const std::filesystem::path& out_dir,
                        const PresetOptions& options = {});

std::string SceneId(int index);

// Read access to a dataset directory. The manifest is read eagerly; scenes
// are loaded and validated on demand.
class Dataset {
 public:
  static Dataset Open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  const nlohmann::json& manifest() const { return manifest_; }
  int size() const { return static_cast<int>(ids_.size()); }
  const std::string& id(int index) const { return ids_[index]; }
  const std::vector<int>& train_indices() const { return train_; }
  const std::vector<int>& val_indices() const { return val_; }

  Scene LoadScene(int index) const;
  std::vector<Scene> LoadScenes(const std::vector<int>& indices) const;

 private:
  std::filesystem::path dir_;
  nlohmann::json manifest_;
  std::vector<std::string> ids_;
  std::vector<SceneSpec> specs_;
  std::vector<int> train_, val_;
};

}  // namespace maskmotion

#endif  // MASKMOTION_SYNTHETIC_DATA_H_
