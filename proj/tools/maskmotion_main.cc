// Command-line front end: dataset generation, training, prediction, tracking
// evaluation and reports.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <glog/logging.h>
#include <nlohmann/json.hpp>

#include "maskmotion/cli_support.h"
#include "maskmotion/error.h"
#include "maskmotion/image.h"
#include "maskmotion/mask_io.h"
#include "maskmotion/motion_net.h"
#include "maskmotion/report.h"
#include "maskmotion/synthetic_data.h"
#include "maskmotion/tracker.h"
#include "maskmotion/training.h"

namespace maskmotion {
namespace {

namespace fs = std::filesystem;

struct Common {
  uint64_t seed = 0;
  std::string out;
  bool force = false;
  std::string config;
};

struct GenArgs {
  std::string preset;
  int count = 50;
  bool equal_colors = false;
  int sample_stride = 0;
  int num_frames = 0;
  int canvas = 64;
};

struct TrainArgs {
  std::string data;
  NetConfig net;
  TrainConfig train;
  std::string encoder_channels = "32,64,128";
  std::string image_encoder = "trained";
  std::string fixed_encoder;
  int log_every = 50;
  bool print_config = false;
};

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string image;
  std::string viz;
};

struct TrackArgs {
  std::string data;
  std::string checkpoint;
  std::string scorer = "appearance";
  std::string split = "all";
  TrackerConfig tracker;
};

struct ReportArgs {
  std::vector<std::string> runs;
};

void AddCommon(CLI::App* sub, Common* c, const std::string& out_help) {
  sub->add_option("--seed", c->seed, "Random seed")->capture_default_str();
  sub->add_option("--out", c->out, out_help);
  sub->add_flag("--force", c->force, "Replace an existing output");
  sub->add_option("--config", c->config, "Flat 'key = value' config file");
}

// Config-file values fill options that were not given on the command line.
void ApplyConfigFile(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  for (const ConfigEntry& e : ReadConfigFile(path)) {
    const std::string where = path + ": line " + std::to_string(e.line) + ": ";
    CLI::Option* opt = e.key == "config" || e.key == "help"
                           ? nullptr
                           : sub->get_option_no_throw("--" + e.key);
    if (opt == nullptr) {
      throw Error(ErrorCategory::kConfig, where + "unknown key '" + e.key +
                                              "' for command '" + sub->get_name() + "'");
    }
    if (opt->count() > 0) continue;
    try {
      opt->add_result(e.value);
      opt->run_callback();
    } catch (const CLI::ParseError& err) {
      throw Error(ErrorCategory::kConfig,
                  where + "invalid value '" + e.value + "' for key '" + e.key + "': " +
                      err.what());
    }
  }
}

nlohmann::json OptionSnapshot(const CLI::App* sub) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names[0] == "help" || names[0] == "config") continue;
    if (opt->get_type_size() == 0) {
      j[names[0]] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      if (r.size() == 1) {
        j[names[0]] = r[0];
      } else {
        j[names[0]] = r;
      }
    } else {
      j[names[0]] = opt->get_default_str();
    }
  }
  return j;
}

std::array<int, 3> ParseChannels(const std::string& text) {
  std::array<int, 3> out{};
  std::istringstream in(text);
  std::string part;
  int n = 0;
  while (std::getline(in, part, ',')) {
    if (n == 3) break;
    try {
      size_t used = 0;
      out[n] = std::stoi(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorCategory::kConfig,
                  "encoder-channels: '" + part + "' is not an integer");
    }
    ++n;
  }
  if (n != 3 || in.rdbuf()->in_avail() > 0 || std::getline(in, part, ',')) {
    throw Error(ErrorCategory::kConfig,
                "encoder-channels must be three comma-separated widths, got '" + text + "'");
  }
  return out;
}

class Stopwatch {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest StartManifest(const CLI::App* sub, int argc, char** argv,
                          const Common& c) {
  RunManifest m;
  m.command = sub->get_name();
  m.argv.assign(argv, argv + argc);
  m.seed = c.seed;
  m.git_describe = BuildDescription();
  m.started_at = UtcTimestamp();
  m.config = {{"options", OptionSnapshot(sub)}};
  return m;
}

void RequireDir(const std::string& path, const char* what) {
  if (path.empty()) {
    throw Error(ErrorCategory::kUsage, std::string("--") + what + " is required");
  }
  if (!fs::is_directory(path)) {
    throw Error(ErrorCategory::kUsage,
                std::string(what) + " directory '" + path + "' does not exist");
  }
}

int CmdGen(const CLI::App* sub, int argc, char** argv, Common c, const GenArgs& a) {
  Stopwatch clock;
  const Preset preset = ParsePreset(a.preset);
  if (a.count < 1) throw Error(ErrorCategory::kConfig, "count must be >= 1");
  if (c.out.empty()) c.out = a.preset + "-seed" + std::to_string(c.seed);
  PresetOptions o;
  o.equal_colors = a.equal_colors;
  o.sample_stride = a.sample_stride;
  o.num_frames = a.num_frames;
  o.canvas = a.canvas;
  RunManifest m = StartManifest(sub, argc, argv, c);
  m.config["preset_options"] = o.ToJson();
  PrepareOutputDir(c.out, c.force);
  MakeBenchmarkSuite(preset, a.count, c.seed, c.out, o);
  m.outputs = {"manifest.json", "scenes/"};
  m.wall_clock_seconds = clock.Seconds();
  WriteRunManifest(c.out, m);
  std::cout << "wrote " << a.count << " " << a.preset << " scenes to " << c.out << "\n";
  return 0;
}

int CmdTrain(const CLI::App* sub, int argc, char** argv, Common c, TrainArgs a) {
  Stopwatch clock;
  a.net.encoder_channels = ParseChannels(a.encoder_channels);
  a.net.image_encoder_mode = ParseImageEncoderMode(a.image_encoder);
  a.train.seed = c.seed;
  a.net.Validate();
  a.train.Validate();
  const nlohmann::json resolved = {{"net", a.net.ToJson()}, {"train", a.train.ToJson()}};
  std::cout << "config: " << resolved.dump() << "\n";
  if (a.print_config) return 0;
  RequireDir(a.data, "data");
  if (c.out.empty()) c.out = "train-seed" + std::to_string(c.seed);

  const Dataset data = Dataset::Open(a.data);
  std::unique_ptr<MotionNet> fixed;
  if (!a.fixed_encoder.empty()) {
    if (a.net.image_encoder_mode != ImageEncoderMode::kFixed || !a.net.use_image_refine) {
      throw Error(ErrorCategory::kUsage,
                  "--fixed-encoder needs --image-refine and --image-encoder fixed");
    }
    fixed = MotionNet::LoadCheckpoint(a.fixed_encoder);
  }
  RunManifest m = StartManifest(sub, argc, argv, c);
  m.config["resolved"] = resolved;
  PrepareOutputDir(c.out, c.force);
  const int total = a.train.iterations;
  const int every = std::max(1, a.log_every);
  const TrainingResult r = RunTraining(
      data, a.net, a.train, c.out, fixed.get(), [&](const IterationReport& it) {
        if (it.iteration % every == 0 || it.iteration == total) {
          std::fprintf(stderr, "iter %d/%d step1 %.4f step2 %.4f (dice %.4f focal %.4f)\n",
                       it.iteration, total, it.step1_loss, it.step2_loss, it.dice,
                       it.focal);
        }
      });

  nlohmann::json metrics = {{"kind", "train"},
                            {"iterations", total},
                            {"isolation_checks", r.isolation_checks}};
  if (!r.curve.empty()) {
    metrics["final_step1_loss"] = r.curve.back().step1_loss;
    metrics["final_step2_loss"] = r.curve.back().step2_loss;
  }
  if (!data.val_indices().empty()) {
    const auto net = MotionNet::LoadCheckpoint(r.checkpoint);
    const PredictionEval e = EvaluatePrediction(*net, data.LoadScenes(data.val_indices()));
    metrics["val"] = {{"windows", e.windows},
                      {"model_iou", e.model_iou},
                      {"copy_last_iou", e.copy_last_iou},
                      {"model_boundary_f", e.model_boundary_f},
                      {"copy_last_boundary_f", e.copy_last_boundary_f}};
    std::cout << "val: IoU " << e.model_iou << " (copy-last " << e.copy_last_iou
              << "), boundary F " << e.model_boundary_f << "\n";
  }
  WriteFileBytes(fs::path(c.out) / "metrics.json", metrics.dump(2) + "\n");
  m.outputs = {"checkpoint.bin", "loss.csv", "metrics.json"};
  m.wall_clock_seconds = clock.Seconds();
  WriteRunManifest(c.out, m);
  std::cout << "wrote " << r.checkpoint.string() << "\n";
  return 0;
}

int CmdPredict(const CLI::App* sub, int argc, char** argv, const Common& c,
               const PredictArgs& a) {
  Stopwatch clock;
  if (c.out.empty()) throw Error(ErrorCategory::kUsage, "--out is required");
  if (fs::exists(c.out) && !c.force) {
    throw Error(ErrorCategory::kUsage, c.out + ": exists (pass --force to replace it)");
  }
  const auto net = MotionNet::LoadCheckpoint(a.checkpoint);
  const std::vector<MaskSequence> inputs = ReadSequencesFile(a.input);
  std::optional<ImageFrame> image;
  if (!a.image.empty()) image = ReadPpm(a.image);
  if (net->config().refine_active() && !image) {
    throw Error(ErrorCategory::kUsage,
                "this checkpoint refines with images; pass --image <frame.ppm>");
  }
  const int keep = net->config().max_history;
  std::vector<MaskSequence> outputs;
  std::vector<std::string> written;
  if (!a.viz.empty()) fs::create_directories(a.viz);
  for (const MaskSequence& in : inputs) {
    const int n = static_cast<int>(in.frames.size());
    if (n < 2) {
      throw Error(ErrorCategory::kInvalidArgument,
                  in.instance_id + ": need at least 2 frames of history, got " +
                      std::to_string(n));
    }
    MaskSequence h;
    h.instance_id = in.instance_id;
    const int start = std::max(0, n - keep);
    h.frames.assign(in.frames.begin() + start, in.frames.end());
    h.frame_indices.assign(in.frame_indices.begin() + start, in.frame_indices.end());
    const FrameMask pred =
        Binarize(net->PredictAnySize(h, image ? &*image : nullptr));
    MaskSequence out = in;
    out.frames.push_back(pred);
    out.frame_indices.push_back(in.frame_indices[n - 1] +
                                (in.frame_indices[n - 1] - in.frame_indices[n - 2]));
    outputs.push_back(out);

    if (!a.viz.empty()) {
      ImageFrame base = image && image->height() == pred.height() &&
                                image->width() == pred.width()
                            ? *image
                            : ImageFrame(pred.height(), pred.width(), 0.5f);
      const float blue[3] = {0.1f, 0.3f, 1.0f};
      const float red[3] = {1.0f, 0.1f, 0.1f};
      base = Overlay(base, in.frames.back(), blue, 0.4f);
      base = Overlay(base, pred, red, 0.5f);
      const fs::path file = fs::path(a.viz) / (in.instance_id + ".ppm");
      WritePpm(file, base);
      written.push_back(file.string());
    }
  }
  WriteSequencesFile(c.out, outputs);
  written.insert(written.begin(), c.out);
  RunManifest m = StartManifest(sub, argc, argv, c);
  m.config["net"] = net->config().ToJson();
  m.outputs = written;
  m.wall_clock_seconds = clock.Seconds();
  WriteFileBytes(c.out + ".run_manifest.json", m.ToJson().dump(2) + "\n");
  std::cout << "predicted " << outputs.size() << " sequence(s) into " << c.out << "\n";
  return 0;
}

int CmdTrack(const CLI::App* sub, int argc, char** argv, Common c, TrackArgs a) {
  Stopwatch clock;
  a.tracker.scorer = ParseScorer(a.scorer);
  a.tracker.Validate();
  if (a.tracker.scorer == Scorer::kMotion && a.checkpoint.empty()) {
    throw Error(ErrorCategory::kUsage, "scorer +motion needs --checkpoint");
  }
  RequireDir(a.data, "data");
  if (c.out.empty()) c.out = "track-" + ScorerName(a.tracker.scorer);
  const Dataset data = Dataset::Open(a.data);
  std::vector<int> indices;
  if (a.split == "train") {
    indices = data.train_indices();
  } else if (a.split == "val") {
    indices = data.val_indices();
  } else {
    for (int i = 0; i < data.size(); ++i) indices.push_back(i);
  }
  if (indices.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "split '" + a.split + "' has no scenes");
  }
  std::unique_ptr<MotionNet> net;
  if (a.tracker.scorer == Scorer::kMotion) net = MotionNet::LoadCheckpoint(a.checkpoint);

  RunManifest m = StartManifest(sub, argc, argv, c);
  m.config["tracker"] = a.tracker.ToJson();
  PrepareOutputDir(c.out, c.force);
  fs::create_directories(fs::path(c.out) / "tracks");
  std::vector<TrackingMetrics> per_scene;
  int stride = 0;
  for (int idx : indices) {
    const Scene scene = data.LoadScene(idx);
    stride = scene.spec.sample_stride;
    std::vector<std::vector<Detection>> dets;
    for (int f = 0; f < scene.num_frames(); ++f) dets.push_back(GroundTruthDetections(scene, f));
    const TrackResult r = RunTracker(scene, dets, a.tracker, net.get());
    WriteFileBytes(fs::path(c.out) / "tracks" / (scene.id + ".txt"), EncodeTrackResult(r));
    per_scene.push_back(EvaluateTracking(scene, r));
  }
  nlohmann::json metrics = MetricsReport(per_scene);
  metrics["kind"] = "track";
  metrics["scorer"] = ScorerName(a.tracker.scorer);
  metrics["dataset"] = a.data;
  metrics["preset"] = data.manifest().value("preset", "");
  metrics["sample_stride"] = stride;
  WriteFileBytes(fs::path(c.out) / "metrics.json", metrics.dump(2) + "\n");
  m.outputs = {"metrics.json", "tracks/"};
  m.wall_clock_seconds = clock.Seconds();
  WriteRunManifest(c.out, m);
  std::cout << ScorerName(a.tracker.scorer) << ": IDSw " << metrics["IDSw"] << " IDF1 "
            << metrics["IDF1"] << " MOTSA " << metrics["MOTSA"] << " mean_iou "
            << metrics["mean_iou"] << "\n";
  return 0;
}

int CmdReport(const CLI::App* sub, int argc, char** argv, Common c, const ReportArgs& a) {
  Stopwatch clock;
  if (c.out.empty()) c.out = "report";
  std::vector<fs::path> dirs(a.runs.begin(), a.runs.end());
  for (const auto& d : dirs) LoadRunSummary(d);  // fail before touching --out
  PrepareOutputDir(c.out, c.force);
  const ReportFiles files = WriteReport(dirs, c.out);
  RunManifest m = StartManifest(sub, argc, argv, c);
  for (const auto& f : files.files) m.outputs.push_back(f.filename().string());
  m.wall_clock_seconds = clock.Seconds();
  WriteRunManifest(c.out, m);
  std::cout << files.table;
  return 0;
}

int Run(int argc, char** argv) {
  CLI::App app{"maskmotion: instance mask motion prediction and tracking"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BuildDescription());

  Common common;
  GenArgs gen;
  TrainArgs train;
  PredictArgs predict;
  TrackArgs track;
  ReportArgs report;

  CLI::App* g = app.add_subcommand("gen", "Generate a synthetic benchmark dataset");
  AddCommon(g, &common, "Dataset directory");
  g->add_option("--preset", gen.preset, "translation, crossing, occlusion, sparse or deform")
      ->required();
  g->add_option("--count", gen.count, "Number of scenes")->capture_default_str();
  g->add_flag("--equal-colors", gen.equal_colors, "Give every shape the same colour");
  g->add_option("--sample-stride", gen.sample_stride, "Frame stride (0: preset default)")
      ->capture_default_str();
  g->add_option("--num-frames", gen.num_frames, "Raw frames per scene (0: preset default)")
      ->capture_default_str();
  g->add_option("--canvas", gen.canvas, "Canvas side in pixels")->capture_default_str();

  CLI::App* t = app.add_subcommand("train", "Train the mask motion network");
  AddCommon(t, &common, "Run directory");
  t->add_option("--data", train.data, "Dataset directory");
  t->add_option("--input-side", train.net.input_side)->capture_default_str();
  t->add_option("--latent-l", train.net.latent_l, "Memory row length")->capture_default_str();
  t->add_option("--memory-c", train.net.memory_c, "Memory rows")->capture_default_str();
  t->add_option("--encoder-channels", train.encoder_channels)->capture_default_str();
  t->add_option("--lstm-layers", train.net.lstm_layers)->capture_default_str();
  t->add_option("--max-history", train.net.max_history)->capture_default_str();
  t->add_flag("--image-refine", train.net.use_image_refine, "Refine with image features");
  t->add_option("--image-encoder", train.image_encoder, "trained, fixed or none")
      ->capture_default_str();
  t->add_option("--fixed-encoder", train.fixed_encoder,
                "Checkpoint supplying fixed image-encoder weights");
  t->add_option("--learning-rate", train.train.learning_rate)->capture_default_str();
  t->add_option("--batch-size", train.train.batch_size)->capture_default_str();
  t->add_option("--iterations", train.train.iterations)->capture_default_str();
  t->add_option("--n-min", train.train.n_min, "Shortest history")->capture_default_str();
  t->add_option("--n-max", train.train.n_max, "Longest history")->capture_default_str();
  t->add_option("--lambda-focal", train.train.loss.lambda_focal)->capture_default_str();
  t->add_option("--lambda-dice", train.train.loss.lambda_dice)->capture_default_str();
  t->add_option("--focal-gamma", train.train.loss.focal_gamma)->capture_default_str();
  t->add_option("--focal-alpha", train.train.loss.focal_alpha)->capture_default_str();
  t->add_flag("--verify-isolation", train.train.verify_isolation,
              "Check that step 2 changes only the prior encoder");
  t->add_option("--log-every", train.log_every)->capture_default_str();
  t->add_flag("--print-config", train.print_config, "Print the resolved config and exit");

  CLI::App* p = app.add_subcommand("predict", "Predict the next mask of each sequence");
  AddCommon(p, &common, "Output mask file");
  p->add_option("--checkpoint", predict.checkpoint)->required();
  p->add_option("--input", predict.input, "Mask sequence file")->required();
  p->add_option("--image", predict.image, "Current frame (PPM) for image refinement");
  p->add_option("--viz", predict.viz, "Write overlay PPMs into this directory");

  CLI::App* k = app.add_subcommand("track", "Track a dataset and score it");
  AddCommon(k, &common, "Run directory");
  k->add_option("--data", track.data, "Dataset directory");
  k->add_option("--checkpoint", track.checkpoint, "Checkpoint for the motion scorer");
  k->add_option("--scorer", track.scorer, "appearance, +motion or +kalman")
      ->capture_default_str();
  k->add_option("--split", track.split)
      ->check(CLI::IsMember({"all", "train", "val"}))
      ->capture_default_str();
  k->add_option("--motion-weight", track.tracker.motion_weight)->capture_default_str();
  k->add_option("--threshold", track.tracker.threshold)->capture_default_str();
  k->add_option("--persistence", track.tracker.persistence)->capture_default_str();
  k->add_option("--top-k", track.tracker.top_k)->capture_default_str();
  k->add_option("--temperature", track.tracker.temperature)->capture_default_str();
  k->add_option("--kalman-process-noise", track.tracker.kalman.process_noise)
      ->capture_default_str();
  k->add_option("--kalman-measurement-noise", track.tracker.kalman.measurement_noise)
      ->capture_default_str();

  CLI::App* r = app.add_subcommand("report", "Compare runs and plot them");
  AddCommon(r, &common, "Report directory");
  r->add_option("runs", report.runs, "Run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return ExitStatus(ErrorCategory::kUsage);
  }

  for (CLI::App* sub : {g, t, p, k, r}) {
    if (!sub->parsed()) continue;
    ApplyConfigFile(sub, common.config);
    if (sub == g) return CmdGen(sub, argc, argv, common, gen);
    if (sub == t) return CmdTrain(sub, argc, argv, common, train);
    if (sub == p) return CmdPredict(sub, argc, argv, common, predict);
    if (sub == k) return CmdTrack(sub, argc, argv, common, track);
    return CmdReport(sub, argc, argv, common, report);
  }
  return ExitStatus(ErrorCategory::kUsage);
}

}  // namespace
}  // namespace maskmotion

int main(int argc, char** argv) {
  google::InitGoogleLogging(argv[0]);
  FLAGS_logtostderr = true;
  try {
    return maskmotion::Run(argc, argv);
  } catch (const maskmotion::Error& e) {
    std::cerr << "error: " << maskmotion::CategoryName(e.category()) << ": " << e.what()
              << "\n";
    return maskmotion::ExitStatus(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
