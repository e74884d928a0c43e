#include "maskmotion/synthetic_data.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "maskmotion/error.h"
#include "maskmotion/mask_io.h"

namespace maskmotion {
namespace {

namespace fs = std::filesystem;

constexpr double kPi = std::numbers::pi;

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 Stream(uint64_t seed, uint64_t a, uint64_t b) {
  return std::mt19937_64(SplitMix64(SplitMix64(seed ^ SplitMix64(a)) + b));
}

std::string KindName(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kDisk: return "disk";
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kBlob: return "blob";
  }
  return "disk";
}

ShapeKind ParseKind(const std::string& name) {
  if (name == "disk") return ShapeKind::kDisk;
  if (name == "rectangle") return ShapeKind::kRectangle;
  if (name == "blob") return ShapeKind::kBlob;
  throw Error(ErrorCategory::kFormat, "unknown shape kind '" + name + "'");
}

// Blob boundary modulation: two low-frequency harmonics, bounded by 25% of
// the base radius.
constexpr double kBlobAmp1 = 0.15;
constexpr double kBlobAmp2 = 0.10;

// Radius of a circle around the centre that contains the shape.
double Extent(const ShapeSpec& s) {
  switch (s.kind) {
    case ShapeKind::kDisk: return s.size;
    case ShapeKind::kRectangle: return s.size * std::hypot(1.0, s.aspect);
    case ShapeKind::kBlob: return s.size * (1.0 + kBlobAmp1 + kBlobAmp2);
  }
  return s.size;
}

// Half extents of the axis-aligned box that contains the shape.
std::array<double, 2> HalfBox(const ShapeSpec& s) {
  if (s.kind == ShapeKind::kRectangle) return {s.size, s.size * s.aspect};
  const double e = Extent(s);
  return {e, e};
}

struct BlobPhase {
  double phi1 = 0.0, phi2 = 0.0;
};

bool Covers(const ShapeSpec& s, const BlobPhase& phase, double cx, double cy,
            int t, double px, double py) {
  const double dx = px - cx, dy = py - cy;
  switch (s.kind) {
    case ShapeKind::kDisk:
      return dx * dx + dy * dy <= s.size * s.size;
    case ShapeKind::kRectangle:
      return std::abs(dx) <= s.size && std::abs(dy) <= s.size * s.aspect;
    case ShapeKind::kBlob: {
      const double theta = std::atan2(dy, dx);
      const double w = s.deform_rate * t;
      const double r =
          s.size * (1.0 + kBlobAmp1 * std::sin(2 * theta + phase.phi1 + w) +
                    kBlobAmp2 * std::sin(3 * theta + phase.phi2 + 1.3 * w));
      return dx * dx + dy * dy <= r * r;
    }
  }
  return false;
}

nlohmann::json ColorJson(const Color& c) { return {c[0], c[1], c[2]}; }

void RequireEmptyOrMissing(const fs::path& dir) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec)) {
    throw Error(ErrorCategory::kIo,
                dir.string() + ": output directory exists and is not empty");
  }
}

void MakeDirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCategory::kIo,
                dir.string() + ": cannot create directory: " + ec.message());
  }
}

}  // namespace

void SceneSpec::Validate() const {
  auto fail = [](const std::string& msg) {
    return Error(ErrorCategory::kInvalidArgument, "scene spec: " + msg);
  };
  if (canvas_height < 1 || canvas_width < 1) throw fail("empty canvas");
  if (num_frames < 3) throw fail("num_frames must be >= 3");
  if (sample_stride < 1) throw fail("sample_stride must be >= 1");
  if ((num_frames - 1) / sample_stride + 1 < 2) {
    throw fail("fewer than two frames survive subsampling");
  }
  if (background_noise < 0) throw fail("background_noise must be >= 0");
  for (size_t k = 0; k < shapes.size(); ++k) {
    const ShapeSpec& s = shapes[k];
    if (!(s.size > 0) || !(s.aspect > 0)) {
      throw fail("shape " + std::to_string(k) + " has non-positive size");
    }
    if (s.velocity_noise < 0 || s.deform_rate < 0) {
      throw fail("shape " + std::to_string(k) + " has negative noise/rate");
    }
    const auto half = HalfBox(s);
    if (s.x0 - half[0] < 0 || s.x0 + half[0] > canvas_width ||
        s.y0 - half[1] < 0 || s.y0 + half[1] > canvas_height) {
      throw fail("shape " + std::to_string(k) + " does not fit the canvas at t=0");
    }
  }
  for (size_t j = 0; j < occluders.size(); ++j) {
    const OccluderSpec& o = occluders[j];
    if (o.row0 >= o.row1 || o.col0 >= o.col1) {
      throw fail("occluder " + std::to_string(j) + " is empty");
    }
  }
}

std::vector<int64_t> SceneSpec::EmittedFrames() const {
  std::vector<int64_t> out;
  for (int t = 0; t < num_frames; t += sample_stride) out.push_back(t);
  return out;
}

nlohmann::json SceneSpec::ToJson() const {
  nlohmann::json j;
  j["canvas"] = {canvas_height, canvas_width};
  j["num_frames"] = num_frames;
  j["sample_stride"] = sample_stride;
  j["seed"] = seed;
  j["background_noise"] = background_noise;
  j["shapes"] = nlohmann::json::array();
  for (const auto& s : shapes) {
    j["shapes"].push_back({{"kind", KindName(s.kind)},
                           {"size", s.size},
                           {"aspect", s.aspect},
                           {"position", {s.x0, s.y0}},
                           {"velocity", {s.vx, s.vy}},
                           {"velocity_noise", s.velocity_noise},
                           {"deform_rate", s.deform_rate},
                           {"depth", s.depth},
                           {"color", ColorJson(s.color)}});
  }
  j["occluders"] = nlohmann::json::array();
  for (const auto& o : occluders) {
    j["occluders"].push_back({{"rows", {o.row0, o.row1}},
                              {"cols", {o.col0, o.col1}},
                              {"depth", o.depth},
                              {"color", ColorJson(o.color)}});
  }
  return j;
}

SceneSpec SceneSpec::FromJson(const nlohmann::json& j) {
  SceneSpec spec;
  try {
    spec.canvas_height = j.at("canvas").at(0).get<int>();
    spec.canvas_width = j.at("canvas").at(1).get<int>();
    spec.num_frames = j.at("num_frames").get<int>();
    spec.sample_stride = j.at("sample_stride").get<int>();
    spec.seed = j.at("seed").get<uint64_t>();
    spec.background_noise = j.at("background_noise").get<double>();
    for (const auto& js : j.at("shapes")) {
      ShapeSpec s;
      s.kind = ParseKind(js.at("kind").get<std::string>());
      s.size = js.at("size").get<double>();
      s.aspect = js.at("aspect").get<double>();
      s.x0 = js.at("position").at(0).get<double>();
      s.y0 = js.at("position").at(1).get<double>();
      s.vx = js.at("velocity").at(0).get<double>();
      s.vy = js.at("velocity").at(1).get<double>();
      s.velocity_noise = js.at("velocity_noise").get<double>();
      s.deform_rate = js.at("deform_rate").get<double>();
      s.depth = js.at("depth").get<int>();
      s.color = js.at("color").get<Color>();
      spec.shapes.push_back(s);
    }
    for (const auto& jo : j.at("occluders")) {
      OccluderSpec o;
      o.row0 = jo.at("rows").at(0).get<int>();
      o.row1 = jo.at("rows").at(1).get<int>();
      o.col0 = jo.at("cols").at(0).get<int>();
      o.col1 = jo.at("cols").at(1).get<int>();
      o.depth = jo.at("depth").get<int>();
      o.color = jo.at("color").get<Color>();
      spec.occluders.push_back(o);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat, std::string("scene spec: ") + e.what());
  }
  spec.Validate();
  return spec;
}

Trajectory ComputeTrajectory(const SceneSpec& spec) {
  Trajectory traj;
  for (size_t k = 0; k < spec.shapes.size(); ++k) {
    const ShapeSpec& s = spec.shapes[k];
    std::mt19937_64 rng = Stream(spec.seed, k, 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::array<double, 2>> centers;
    double x = s.x0, y = s.y0, vx = s.vx, vy = s.vy;
    for (int t = 0; t < spec.num_frames; ++t) {
      centers.push_back({x, y});
      x += vx;
      y += vy;
      if (s.velocity_noise > 0) {
        vx += s.velocity_noise * noise(rng);
        vy += s.velocity_noise * noise(rng);
      }
    }
    traj.centers.push_back(std::move(centers));
  }
  return traj;
}

Scene RenderScene(const SceneSpec& spec, const std::string& id) {
  spec.Validate();
  const int h = spec.canvas_height, w = spec.canvas_width;
  const Trajectory traj = ComputeTrajectory(spec);
  std::vector<BlobPhase> phases;
  for (size_t k = 0; k < spec.shapes.size(); ++k) {
    std::mt19937_64 rng = Stream(spec.seed, k, 3);
    std::uniform_real_distribution<double> u(0.0, 2 * kPi);
    BlobPhase p;
    p.phi1 = u(rng);
    p.phi2 = u(rng);
    phases.push_back(p);
  }

  // Painter's order: ascending depth, shapes before occluders at equal depth,
  // then by index.
  struct Layer {
    int depth;
    int order;
    int shape;  // -1 for occluders
    int occluder;
  };
  std::vector<Layer> layers;
  for (size_t k = 0; k < spec.shapes.size(); ++k) {
    layers.push_back({spec.shapes[k].depth, 0, static_cast<int>(k), -1});
  }
  for (size_t j = 0; j < spec.occluders.size(); ++j) {
    layers.push_back({spec.occluders[j].depth, 1, -1, static_cast<int>(j)});
  }
  std::stable_sort(layers.begin(), layers.end(), [](const Layer& a, const Layer& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.order < b.order;
  });

  Scene scene;
  scene.id = id;
  scene.spec = spec;
  scene.frame_indices = spec.EmittedFrames();
  scene.instances.resize(spec.shapes.size());
  for (size_t k = 0; k < spec.shapes.size(); ++k) {
    scene.instances[k].instance_id = "obj" + std::to_string(k);
    scene.instances[k].frame_indices = scene.frame_indices;
  }

  std::vector<int> owner(static_cast<size_t>(h) * w);
  for (int64_t t : scene.frame_indices) {
    std::fill(owner.begin(), owner.end(), -1);
    for (const Layer& layer : layers) {
      if (layer.shape >= 0) {
        const ShapeSpec& s = spec.shapes[layer.shape];
        const auto [cx, cy] = traj.centers[layer.shape][t];
        const auto half = HalfBox(s);
        const int r0 = std::max(0, static_cast<int>(std::floor(cy - half[1])) - 1);
        const int r1 = std::min(h - 1, static_cast<int>(std::ceil(cy + half[1])) + 1);
        const int c0 = std::max(0, static_cast<int>(std::floor(cx - half[0])) - 1);
        const int c1 = std::min(w - 1, static_cast<int>(std::ceil(cx + half[0])) + 1);
        for (int r = r0; r <= r1; ++r)
          for (int c = c0; c <= c1; ++c) {
            if (Covers(s, phases[layer.shape], cx, cy, static_cast<int>(t),
                       c + 0.5, r + 0.5)) {
              owner[r * w + c] = layer.shape;
            }
          }
      } else {
        const OccluderSpec& o = spec.occluders[layer.occluder];
        for (int r = std::max(0, o.row0); r < std::min(h, o.row1); ++r)
          for (int c = std::max(0, o.col0); c < std::min(w, o.col1); ++c) {
            owner[r * w + c] = -2 - layer.occluder;
          }
      }
    }

    std::mt19937_64 rng = Stream(spec.seed, static_cast<uint64_t>(t), 2);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    ImageFrame image(h, w);
    std::vector<std::vector<uint8_t>> bits(spec.shapes.size(),
                                           std::vector<uint8_t>(owner.size(), 0));
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const int o = owner[r * w + c];
        Color color = {0.5f, 0.5f, 0.5f};
        if (o >= 0) {
          color = spec.shapes[o].color;
          bits[o][r * w + c] = 1;
        } else if (o <= -2) {
          color = spec.occluders[-2 - o].color;
        }
        for (int ch = 0; ch < 3; ++ch) {
          const float v = color[ch] + static_cast<float>(spec.background_noise) *
                                          noise(rng);
          image.set(r, c, ch, std::clamp(v, 0.0f, 1.0f));
        }
      }
    scene.images.push_back(Quantize(image));
    for (size_t k = 0; k < spec.shapes.size(); ++k) {
      scene.instances[k].frames.emplace_back(h, w, std::move(bits[k]));
    }
  }
  return scene;
}

std::string PresetName(Preset preset) {
  switch (preset) {
    case Preset::kTranslation: return "translation";
    case Preset::kCrossing: return "crossing";
    case Preset::kOcclusion: return "occlusion";
    case Preset::kSparse: return "sparse";
    case Preset::kDeform: return "deform";
  }
  return "translation";
}

Preset ParsePreset(const std::string& name) {
  for (Preset p : {Preset::kTranslation, Preset::kCrossing, Preset::kOcclusion,
                   Preset::kSparse, Preset::kDeform}) {
    if (PresetName(p) == name) return p;
  }
  throw Error(ErrorCategory::kUsage,
              "unknown preset '" + name +
                  "' (expected translation, crossing, occlusion, sparse or deform)");
}

nlohmann::json PresetOptions::ToJson() const {
  return {{"equal_colors", equal_colors},
          {"sample_stride", sample_stride},
          {"num_frames", num_frames},
          {"canvas", canvas}};
}

PresetOptions PresetOptions::FromJson(const nlohmann::json& j) {
  PresetOptions o;
  o.equal_colors = j.at("equal_colors").get<bool>();
  o.sample_stride = j.at("sample_stride").get<int>();
  o.num_frames = j.at("num_frames").get<int>();
  o.canvas = j.at("canvas").get<int>();
  return o;
}

namespace {

const Color kPalette[] = {
    {0.90f, 0.20f, 0.20f}, {0.20f, 0.75f, 0.25f}, {0.20f, 0.35f, 0.90f},
    {0.95f, 0.80f, 0.15f}, {0.80f, 0.25f, 0.85f}, {0.15f, 0.85f, 0.85f},
    {0.95f, 0.55f, 0.10f}, {0.55f, 0.35f, 0.20f},
};
constexpr Color kSharedColor = {0.85f, 0.45f, 0.30f};

class PresetBuilder {
 public:
  PresetBuilder(Preset preset, uint64_t seed, const PresetOptions& options)
      : rng_(SplitMix64(seed)), options_(options) {
    spec_.seed = SplitMix64(seed ^ 0x5eedULL);
    spec_.canvas_height = spec_.canvas_width = options.canvas;
    if (options.canvas < 32) {
      throw Error(ErrorCategory::kInvalidArgument, "preset canvas must be >= 32");
    }
    colors_.assign(std::begin(kPalette), std::end(kPalette));
    std::shuffle(colors_.begin(), colors_.end(), rng_);
    switch (preset) {
      case Preset::kTranslation: BuildFree(12, 1, {1.5, 5.0}, false); break;
      case Preset::kSparse: BuildFree(46, 5, {0.3, 0.9}, false); break;
      case Preset::kDeform: BuildFree(12, 1, {1.0, 3.5}, true); break;
      case Preset::kCrossing: BuildCrossing(); break;
      case Preset::kOcclusion: BuildOcclusion(); break;
    }
    for (size_t k = 0; k < spec_.shapes.size(); ++k) {
      spec_.shapes[k].color =
          options_.equal_colors ? kSharedColor : colors_[k % colors_.size()];
    }
    spec_.Validate();
  }

  SceneSpec spec() const { return spec_; }

 private:
  double U(double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng_);
  }
  int UInt(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }

  int Frames(int preset_default) {
    return options_.num_frames > 0 ? options_.num_frames : preset_default;
  }
  int Stride(int preset_default) {
    return options_.sample_stride > 0 ? options_.sample_stride : preset_default;
  }

  ShapeSpec RandomShape(bool blob) {
    ShapeSpec s;
    if (blob) {
      s.kind = ShapeKind::kBlob;
      s.size = U(6.0, 8.0);
      s.deform_rate = U(0.2, 0.5);
    } else {
      s.kind = UInt(0, 1) == 0 ? ShapeKind::kDisk : ShapeKind::kRectangle;
      s.size = U(6.0, 9.0);
      if (s.kind == ShapeKind::kRectangle) {
        s.size = U(5.0, 8.0);
        s.aspect = U(0.7, 1.3);
      }
    }
    return s;
  }

  // Constant-velocity shapes whose whole path stays on the canvas and which
  // never touch each other.
  void BuildFree(int default_frames, int default_stride,
                 std::array<double, 2> speed, bool blob) {
    spec_.num_frames = Frames(default_frames);
    spec_.sample_stride = Stride(default_stride);
    const double span = spec_.num_frames - 1;
    const double side = options_.canvas;
    const int wanted = UInt(2, 3);
    for (int attempt = 0; attempt < 200 && static_cast<int>(spec_.shapes.size()) < wanted;
         ++attempt) {
      ShapeSpec s = RandomShape(blob);
      const auto half = HalfBox(s);
      double v = U(speed[0], speed[1]);
      const double theta = U(0.0, 2 * kPi);
      // Shrink the speed until the path fits.
      double lo_x = 0, hi_x = -1, lo_y = 0, hi_y = -1;
      for (int shrink = 0; shrink < 20; ++shrink) {
        s.vx = v * std::cos(theta);
        s.vy = v * std::sin(theta);
        lo_x = half[0] + 1 - std::min(0.0, s.vx * span);
        hi_x = side - half[0] - 1 - std::max(0.0, s.vx * span);
        lo_y = half[1] + 1 - std::min(0.0, s.vy * span);
        hi_y = side - half[1] - 1 - std::max(0.0, s.vy * span);
        if (lo_x <= hi_x && lo_y <= hi_y) break;
        v *= 0.85;
      }
      if (lo_x > hi_x || lo_y > hi_y) continue;
      s.x0 = U(lo_x, hi_x);
      s.y0 = U(lo_y, hi_y);
      s.depth = static_cast<int>(spec_.shapes.size());
      if (Clear(s)) spec_.shapes.push_back(s);
    }
  }

  // True when `s` keeps a 2 px gap to every existing shape on every frame.
  bool Clear(const ShapeSpec& s) const {
    for (const auto& o : spec_.shapes) {
      for (int t = 0; t < spec_.num_frames; ++t) {
        const double d = std::hypot(s.x0 + s.vx * t - o.x0 - o.vx * t,
                                    s.y0 + s.vy * t - o.y0 - o.vy * t);
        if (d < Extent(s) + Extent(o) + 2.0) return false;
      }
    }
    return true;
  }

  // Two identical-size disks that pass through one point mid-scene.
  void BuildCrossing() {
    spec_.num_frames = Frames(16);
    spec_.sample_stride = Stride(1);
    const double side = options_.canvas;
    const double radius = U(5.5, 7.5);
    const double tc = (spec_.num_frames - 1) / 2.0 + U(-1.0, 1.0);
    const double cx = side / 2 + U(-5.0, 5.0);
    const double cy = side / 2 + U(-5.0, 5.0);
    const double reach = std::max(tc, spec_.num_frames - 1 - tc);
    const double room = side / 2 - 5.0 - radius - 1.0;
    const double vmax = std::min(3.5, room / reach);
    const double theta1 = U(0.0, 2 * kPi);
    const double theta2 = theta1 + (UInt(0, 1) ? 1 : -1) * U(kPi / 3, 2 * kPi / 3);
    for (int k = 0; k < 2; ++k) {
      ShapeSpec s;
      s.kind = ShapeKind::kDisk;
      s.size = radius;
      const double v = U(0.6 * vmax, vmax);
      const double theta = k == 0 ? theta1 : theta2;
      s.vx = v * std::cos(theta);
      s.vy = v * std::sin(theta);
      s.x0 = cx - s.vx * tc;
      s.y0 = cy - s.vy * tc;
      s.depth = k;
      spec_.shapes.push_back(s);
    }
  }

  // Two shapes in separate lanes that each pass behind one opaque bar wide
  // enough to hide them completely for at least one frame.
  void BuildOcclusion() {
    spec_.num_frames = Frames(20);
    spec_.sample_stride = Stride(1);
    const double side = options_.canvas;
    const bool vertical_bar = UInt(0, 1) == 0;
    const double bar_center = side / 2 + U(-3.0, 3.0);
    std::array<double, 2> speeds, sizes;
    for (int k = 0; k < 2; ++k) sizes[k] = U(5.0, 6.5);
    const double mid = (spec_.num_frames - 1) / 2.0;
    const double reach = mid + 2.0;
    const double vmax =
        std::min(1.75, (side / 2 - 3.0 - std::max(sizes[0], sizes[1]) - 1.0) / reach);
    for (int k = 0; k < 2; ++k) speeds[k] = U(0.7 * vmax, vmax);
    const double half_width =
        std::max(sizes[0], sizes[1]) + std::max(speeds[0], speeds[1]) / 2 + 2.0;
    OccluderSpec bar;
    bar.depth = 100;
    const int lo = static_cast<int>(std::floor(bar_center - half_width));
    const int hi = static_cast<int>(std::ceil(bar_center + half_width));
    if (vertical_bar) {
      bar.row0 = 0, bar.row1 = options_.canvas, bar.col0 = lo, bar.col1 = hi;
    } else {
      bar.row0 = lo, bar.row1 = hi, bar.col0 = 0, bar.col1 = options_.canvas;
    }
    spec_.occluders.push_back(bar);
    for (int k = 0; k < 2; ++k) {
      ShapeSpec s;
      s.kind = UInt(0, 1) == 0 ? ShapeKind::kDisk : ShapeKind::kRectangle;
      s.size = sizes[k];
      const double lane = side * (k == 0 ? 0.25 : 0.75) + U(-3.0, 3.0);
      const double dir = UInt(0, 1) ? 1.0 : -1.0;
      const double tc = mid + U(-2.0, 2.0);
      const double along0 = bar_center - dir * speeds[k] * tc;
      if (vertical_bar) {
        s.vx = dir * speeds[k];
        s.x0 = along0;
        s.y0 = lane;
      } else {
        s.vy = dir * speeds[k];
        s.y0 = along0;
        s.x0 = lane;
      }
      s.depth = k;
      spec_.shapes.push_back(s);
    }
  }

  std::mt19937_64 rng_;
  PresetOptions options_;
  SceneSpec spec_;
  std::vector<Color> colors_;
};

}  // namespace

SceneSpec MakePresetSpec(Preset preset, uint64_t seed,
                         const PresetOptions& options) {
  return PresetBuilder(preset, seed, options).spec();
}

std::string SceneId(int index) {
  std::ostringstream os;
  os << "scene_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

void MakeBenchmarkSuite(Preset preset, int count, uint64_t seed,
                        const fs::path& out_dir, const PresetOptions& options) {
  if (count < 1) {
    throw Error(ErrorCategory::kInvalidArgument, "count must be >= 1");
  }
  RequireEmptyOrMissing(out_dir);
  MakeDirs(out_dir / "scenes");
  const int train = static_cast<int>(std::ceil(0.8 * count));
  nlohmann::json manifest;
  manifest["format"] = "maskmotion-dataset";
  manifest["version"] = 1;
  manifest["preset"] = PresetName(preset);
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["options"] = options.ToJson();
  manifest["split"] = {{"train", nlohmann::json::array()},
                       {"val", nlohmann::json::array()}};
  manifest["scenes"] = nlohmann::json::array();
  for (int i = 0; i < count; ++i) {
    const SceneSpec spec =
        MakePresetSpec(preset, SplitMix64(seed) + static_cast<uint64_t>(i), options);
    const std::string id = SceneId(i);
    const Scene scene = RenderScene(spec, id);
    const fs::path dir = out_dir / "scenes" / id;
    MakeDirs(dir / "frames");
    WriteSequencesFile(dir / "masks.txt", scene.instances);
    for (int f = 0; f < scene.num_frames(); ++f) {
      WritePpm(dir / "frames" / (std::to_string(scene.frame_indices[f]) + ".ppm"),
               scene.images[f]);
    }
    manifest["split"][i < train ? "train" : "val"].push_back(id);
    manifest["scenes"].push_back({{"id", id},
                                  {"instances", scene.instances.size()},
                                  {"frame_indices", scene.frame_indices},
                                  {"spec", spec.ToJson()}});
  }
  WriteFileBytes(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset Dataset::Open(const fs::path& dir) {
  Dataset d;
  d.dir_ = dir;
  const fs::path manifest_path = dir / "manifest.json";
  std::error_code ec;
  if (!fs::exists(manifest_path, ec)) {
    throw Error(ErrorCategory::kIo, manifest_path.string() + ": manifest not found");
  }
  auto fail = [&](const std::string& msg) {
    return Error(ErrorCategory::kFormat, manifest_path.string() + ": " + msg);
  };
  try {
    d.manifest_ = nlohmann::json::parse(ReadFileBytes(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
  try {
    if (d.manifest_.at("format") != "maskmotion-dataset") {
      throw fail("not a dataset manifest");
    }
    std::map<std::string, int> index_of;
    for (const auto& s : d.manifest_.at("scenes")) {
      const std::string id = s.at("id").get<std::string>();
      if (index_of.count(id)) throw fail("duplicate scene id " + id);
      index_of[id] = static_cast<int>(d.ids_.size());
      d.ids_.push_back(id);
      try {
        d.specs_.push_back(SceneSpec::FromJson(s.at("spec")));
      } catch (const Error& e) {
        throw fail("scene " + id + ": " + e.what());
      }
    }
    if (d.manifest_.at("count").get<int>() != d.size()) {
      throw fail("count does not match the scene list");
    }
    for (const char* split : {"train", "val"}) {
      for (const auto& id : d.manifest_.at("split").at(split)) {
        auto it = index_of.find(id.get<std::string>());
        if (it == index_of.end()) {
          throw fail(std::string(split) + " split names unknown scene " + id.dump());
        }
        (std::string(split) == "train" ? d.train_ : d.val_).push_back(it->second);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
  int on_disk = 0;
  if (fs::is_directory(dir / "scenes", ec)) {
    for (const auto& entry : fs::directory_iterator(dir / "scenes")) {
      on_disk += entry.is_directory();
    }
  }
  if (on_disk != d.size()) {
    throw Error(ErrorCategory::kFormat,
                manifest_path.string() + ": manifest lists " +
                    std::to_string(d.size()) + " scenes but " +
                    (dir / "scenes").string() + " holds " +
                    std::to_string(on_disk));
  }
  return d;
}

Scene Dataset::LoadScene(int index) const {
  if (index < 0 || index >= size()) {
    throw Error(ErrorCategory::kInvalidArgument,
                "scene index " + std::to_string(index) + " out of range");
  }
  const SceneSpec& spec = specs_[index];
  const std::string& id = ids_[index];
  const fs::path scene_dir = dir_ / "scenes" / id;
  const fs::path masks_path = scene_dir / "masks.txt";
  Scene scene;
  scene.id = id;
  scene.spec = spec;
  scene.frame_indices = spec.EmittedFrames();
  scene.instances = ReadSequencesFile(masks_path);
  auto fail = [&](const std::string& msg) {
    return Error(ErrorCategory::kFormat, masks_path.string() + ": " + msg);
  };
  if (scene.instances.size() != spec.shapes.size()) {
    throw fail("expected " + std::to_string(spec.shapes.size()) +
               " instances, found " + std::to_string(scene.instances.size()));
  }
  for (size_t k = 0; k < scene.instances.size(); ++k) {
    const MaskSequence& seq = scene.instances[k];
    if (seq.instance_id != "obj" + std::to_string(k)) {
      throw fail("instance " + std::to_string(k) + " has id " + seq.instance_id);
    }
    if (seq.frame_indices != scene.frame_indices) {
      throw fail("instance " + seq.instance_id + " frame indices disagree with the manifest");
    }
    if (seq.height() != spec.canvas_height || seq.width() != spec.canvas_width) {
      throw fail("instance " + seq.instance_id + " has the wrong mask size");
    }
  }
  for (int f = 0; f < scene.num_frames(); ++f) {
    std::vector<uint8_t> seen(
        static_cast<size_t>(spec.canvas_height) * spec.canvas_width, 0);
    for (const auto& seq : scene.instances) {
      const auto bits = seq.frames[f].bits();
      for (size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] && seen[i]++) {
          throw fail("frame " + std::to_string(scene.frame_indices[f]) +
                     ": a pixel belongs to two instances");
        }
      }
    }
    const fs::path frame_path =
        scene_dir / "frames" / (std::to_string(scene.frame_indices[f]) + ".ppm");
    std::error_code ec;
    if (!fs::exists(frame_path, ec)) {
      throw Error(ErrorCategory::kIo, frame_path.string() + ": missing frame file");
    }
    ImageFrame image = ReadPpm(frame_path);
    if (image.height() != spec.canvas_height || image.width() != spec.canvas_width) {
      throw Error(ErrorCategory::kFormat, frame_path.string() + ": wrong image size");
    }
    scene.images.push_back(std::move(image));
  }
  return scene;
}

std::vector<Scene> Dataset::LoadScenes(const std::vector<int>& indices) const {
  std::vector<Scene> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(LoadScene(i));
  return out;
}

}  // namespace maskmotion
