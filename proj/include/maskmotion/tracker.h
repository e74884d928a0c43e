#ifndef MASKMOTION_TRACKER_H_
#define MASKMOTION_TRACKER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "maskmotion/image.h"
#include "maskmotion/mask.h"
#include "maskmotion/motion_net.h"
#include "maskmotion/synthetic_data.h"

namespace maskmotion {

using Embedding = std::vector<double>;
// Rows are tracklets, columns are detections.
using ScoreMatrix = Eigen::MatrixXd;

struct Detection {
  FrameMask mask;
  Embedding appearance;  // unit norm
  double confidence = 1.0;
  std::optional<int> class_id;
};

// Unit-norm colour descriptor of the masked pixels: mean RGB followed by
// its complement, so dark and bright regions of one hue stay apart.
Embedding AppearanceEmbedding(const ImageFrame& image, const FrameMask& mask);

// Bi-softmax of cosine similarities scaled by 1/temperature: the mean of a
// softmax over detections (per row) and one over tracklets (per column).
ScoreMatrix AppearanceScore(const std::vector<Embedding>& tracklets,
                            const std::vector<Embedding>& detections,
                            double temperature = 1.0);

// Cell (i, j) is the IoU of predictions[i] and detections[j]. Rows without
// a prediction are zero.
ScoreMatrix MotionScore(const std::vector<std::optional<FrameMask>>& predictions,
                        const std::vector<FrameMask>& detections);

// Predicts each history with the network and scores it. Histories shorter
// than two frames get a zero row.
ScoreMatrix MotionScore(const MotionNet& net,
                        const std::vector<MaskSequence>& histories,
                        const std::vector<FrameMask>& detections,
                        const ImageFrame* image = nullptr);

// Maximum-weight assignment on a rectangular matrix. Returns, for each row,
// the assigned column or -1 when there are more rows than columns.
std::vector<int> SolveAssignment(const ScoreMatrix& scores);

struct Assignment {
  std::vector<std::pair<int, int>> matches;  // (tracklet, detection)
  std::vector<int> unmatched_tracklets;
  std::vector<int> unmatched_detections;
  ScoreMatrix fused;
};

// fused = appearance + weight * motion. With top_k > 0 only the motion rows
// of the top_k most confident tracklets are kept. Optimal pairs whose fused
// score is below `threshold` are left unmatched.
Assignment FuseAndAssign(const ScoreMatrix& appearance, const ScoreMatrix* motion,
                         double weight, int top_k,
                         const std::vector<double>& confidences,
                         double threshold);

struct KalmanOptions {
  double process_noise = 1e-2;      // white-acceleration spectral density
  double measurement_noise = 1.0;   // centre variance, px^2
};

// Constant-velocity filter on a 2-D centre. The first two measurements
// initialize position and velocity; later ones use the linear-Gaussian
// update.
class KalmanFilter {
 public:
  explicit KalmanFilter(const KalmanOptions& options = {});

  // Advances one frame and returns the predicted centre.
  Eigen::Vector2d Predict();
  void Update(const Eigen::Vector2d& center);

  Eigen::Vector2d center() const { return x_.head<2>(); }
  Eigen::Vector2d velocity() const { return x_.tail<2>(); }
  const Eigen::Matrix4d& covariance() const { return p_; }
  int updates() const { return updates_; }

 private:
  KalmanOptions options_;
  Eigen::Vector4d x_ = Eigen::Vector4d::Zero();
  Eigen::Matrix4d p_ = Eigen::Matrix4d::Identity();
  Eigen::Vector2d last_measurement_ = Eigen::Vector2d::Zero();
  int updates_ = 0;
  int steps_since_update_ = 0;
};

// exp(-|predicted - centroid| / sigma). Empty detections score 0.
ScoreMatrix KalmanScore(const std::vector<Eigen::Vector2d>& predicted_centers,
                        const std::vector<FrameMask>& detections, double sigma);

enum class Scorer { kAppearance, kMotion, kKalman };

std::string ScorerName(Scorer scorer);
// Accepts "appearance", "motion", "kalman" and the "+motion", "+kalman"
// spellings. Throws kUsage.
Scorer ParseScorer(const std::string& name);

struct TrackerConfig {
  Scorer scorer = Scorer::kAppearance;
  double motion_weight = 1.0;
  double threshold = 0.2;
  int persistence = 10;     // missed frames before a tracklet retires
  int top_k = 0;            // 0 scores motion for every active tracklet
  double temperature = 0.1;
  double appearance_momentum = 0.8;
  KalmanOptions kalman;

  void Validate() const;
  nlohmann::json ToJson() const;
};

struct TrackedMask {
  int64_t frame_index = 0;
  int track_id = 0;
  FrameMask mask;

  friend bool operator==(const TrackedMask&, const TrackedMask&) = default;
};

struct TrackResult {
  std::string scene_id;
  int height = 0;
  int width = 0;
  std::vector<TrackedMask> masks;
  // IoU of each matched tracklet's forecast (motion mask, shifted last mask
  // or the last mask itself, by scorer) with the detection it received.
  std::vector<double> forecast_ious;

  friend bool operator==(const TrackResult& a, const TrackResult& b) {
    return a.scene_id == b.scene_id && a.height == b.height &&
           a.width == b.width && a.masks == b.masks;
  }
};

// Online association over one video. Tracklet ids start at 1 and are never
// reused.
class OnlineTracker {
 public:
  OnlineTracker(const TrackerConfig& config, const MotionNet* net, int height,
                int width);

  // Associates one frame and returns the masks emitted for it.
  std::vector<TrackedMask> Step(int64_t frame_index,
                                const std::vector<Detection>& detections,
                                const ImageFrame* image = nullptr,
                                std::vector<double>* forecast_ious = nullptr);

  int active_tracklets() const { return static_cast<int>(tracklets_.size()); }

 private:
  struct Tracklet {
    int id = 0;
    MaskSequence history;  // at most max_history masks, extrapolated on misses
    Embedding appearance;
    double confidence = 0.0;
    int age = 0;
    int missed = 0;
    KalmanFilter kalman;
  };

  std::optional<FrameMask> Forecast(const Tracklet& t, const ImageFrame* image,
                                    const Eigen::Vector2d& kalman_center) const;

  TrackerConfig config_;
  const MotionNet* net_;
  int height_, width_;
  int history_limit_;
  int next_id_ = 1;
  std::vector<Tracklet> tracklets_;
};

// Perfect detector: the non-empty ground-truth masks of a frame in raster
// order of their first pixel, with AppearanceEmbedding descriptors.
std::vector<Detection> GroundTruthDetections(const Scene& scene, int frame);

TrackResult RunTracker(const Scene& scene,
                       const std::vector<std::vector<Detection>>& detections,
                       const TrackerConfig& config, const MotionNet* net);

// Text form: "TRACKS <height> <width>" then one "T <frame> <track> <runs>"
// line per mask, runs in the mask run-length grammar.
std::string EncodeTrackResult(const TrackResult& result);
TrackResult DecodeTrackResult(std::string_view text);

// MOTS-style scores against ground truth. Per frame, predictions and
// ground-truth masks are matched one-to-one at IoU >= 0.5. MOTSA is
// (TP - FP - IDSw) / |GT|; IDF1 uses the best global identity mapping.
struct TrackingMetrics {
  std::string scene_id;
  int num_gt = 0;
  int num_pred = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int id_switches = 0;
  int idtp = 0;
  double iou_sum = 0.0;
  double forecast_iou_sum = 0.0;
  int forecasts = 0;

  double idf1() const;
  double motsa() const;
  double mean_iou() const;
  double forecast_iou() const;

  void Accumulate(const TrackingMetrics& other);
  nlohmann::json ToJson() const;
};

TrackingMetrics EvaluateTracking(const Scene& scene, const TrackResult& result);

// {IDSw, IDF1, MOTSA, mean_iou, forecast_iou, per_scene: [...]} with totals
// pooled over scenes.
nlohmann::json MetricsReport(const std::vector<TrackingMetrics>& per_scene);

}  // namespace maskmotion

#endif  // MASKMOTION_TRACKER_H_
