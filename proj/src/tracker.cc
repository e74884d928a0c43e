#include "maskmotion/tracker.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <glog/logging.h>

#include "maskmotion/error.h"
#include "maskmotion/mask_io.h"

namespace maskmotion {
namespace {

constexpr double kConfidenceDecay = 0.9;

double Norm(const Embedding& e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s);
}

void CheckEmbeddings(const std::vector<Embedding>& es, size_t dim,
                     const char* what) {
  for (size_t i = 0; i < es.size(); ++i) {
    if (es[i].size() != dim) {
      throw Error(ErrorCategory::kShapeMismatch,
                  std::string(what) + " embedding " + std::to_string(i) +
                      " has dimension " + std::to_string(es[i].size()) +
                      ", expected " + std::to_string(dim));
    }
    if (!(Norm(es[i]) > 0.0)) {
      throw Error(ErrorCategory::kNumeric,
                  std::string(what) + " embedding " + std::to_string(i) +
                      " has zero norm");
    }
  }
}

// Translates a mask by a rounded offset; pixels leaving the grid are dropped.
FrameMask Shift(const FrameMask& m, double dx, double dy) {
  const int sx = static_cast<int>(std::lround(dx));
  const int sy = static_cast<int>(std::lround(dy));
  FrameMask out(m.height(), m.width());
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) {
      if (!m.at(r, c)) continue;
      const int rr = r + sy, cc = c + sx;
      if (rr >= 0 && rr < m.height() && cc >= 0 && cc < m.width()) {
        out.set(rr, cc, true);
      }
    }
  return out;
}

// Hungarian algorithm (shortest augmenting path with potentials) minimizing
// cost on an n x m matrix with n <= m. Returns the column of each row.
std::vector<int> MinCostRows(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

Eigen::Vector2d Centroid(const FrameMask& m, bool* ok) {
  double x = 0.0, y = 0.0;
  *ok = MaskCentroid(m, &x, &y);
  return {x, y};
}

}  // namespace

Embedding AppearanceEmbedding(const ImageFrame& image, const FrameMask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw Error(ErrorCategory::kShapeMismatch,
                "image and mask sizes differ");
  }
  double sum[3] = {0.0, 0.0, 0.0};
  int n = 0;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      for (int ch = 0; ch < 3; ++ch) sum[ch] += image.at(r, c, ch);
      ++n;
    }
  if (n == 0) {
    throw Error(ErrorCategory::kInvalidArgument,
                "appearance embedding of an empty mask");
  }
  Embedding e(6);
  for (int ch = 0; ch < 3; ++ch) {
    e[ch] = sum[ch] / n;
    e[ch + 3] = 1.0 - e[ch];
  }
  const double norm = Norm(e);
  for (double& v : e) v /= norm;
  return e;
}

ScoreMatrix AppearanceScore(const std::vector<Embedding>& tracklets,
                            const std::vector<Embedding>& detections,
                            double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCategory::kInvalidArgument, "temperature must be > 0");
  }
  const int rows = static_cast<int>(tracklets.size());
  const int cols = static_cast<int>(detections.size());
  if (rows == 0 || cols == 0) return ScoreMatrix::Zero(rows, cols);
  const size_t dim = tracklets.front().size();
  CheckEmbeddings(tracklets, dim, "tracklet");
  CheckEmbeddings(detections, dim, "detection");

  ScoreMatrix logits(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double ni = Norm(tracklets[i]);
    for (int j = 0; j < cols; ++j) {
      double dot = 0.0;
      for (size_t k = 0; k < dim; ++k) dot += tracklets[i][k] * detections[j][k];
      logits(i, j) = dot / (ni * Norm(detections[j])) / temperature;
    }
  }
  ScoreMatrix over_dets(rows, cols), over_tracks(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const Eigen::RowVectorXd e =
        (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    over_dets.row(i) = e / e.sum();
  }
  for (int j = 0; j < cols; ++j) {
    const Eigen::VectorXd e =
        (logits.col(j).array() - logits.col(j).maxCoeff()).exp();
    over_tracks.col(j) = e / e.sum();
  }
  return 0.5 * (over_dets + over_tracks);
}

ScoreMatrix MotionScore(const std::vector<std::optional<FrameMask>>& predictions,
                        const std::vector<FrameMask>& detections) {
  ScoreMatrix s = ScoreMatrix::Zero(predictions.size(), detections.size());
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (!predictions[i]) continue;
    for (size_t j = 0; j < detections.size(); ++j) {
      // Both empty means "nothing predicted, nothing detected": no evidence.
      if (predictions[i]->Empty() && detections[j].Empty()) continue;
      s(i, j) = MaskIou(*predictions[i], detections[j]);
    }
  }
  return s;
}

ScoreMatrix MotionScore(const MotionNet& net,
                        const std::vector<MaskSequence>& histories,
                        const std::vector<FrameMask>& detections,
                        const ImageFrame* image) {
  std::vector<std::optional<FrameMask>> preds(histories.size());
  for (size_t i = 0; i < histories.size(); ++i) {
    if (histories[i].frames.size() < 2) continue;
    MaskSequence h = histories[i];
    const int keep = net.config().max_history;
    if (static_cast<int>(h.frames.size()) > keep) {
      h.frames.erase(h.frames.begin(), h.frames.end() - keep);
      h.frame_indices.erase(h.frame_indices.begin(), h.frame_indices.end() - keep);
    }
    preds[i] = Binarize(net.PredictAnySize(h, image));
  }
  return MotionScore(preds, detections);
}

std::vector<int> SolveAssignment(const ScoreMatrix& scores) {
  if (!scores.allFinite()) {
    throw Error(ErrorCategory::kNumeric, "assignment scores must be finite");
  }
  if (scores.rows() == 0) return {};
  if (scores.cols() == 0) return std::vector<int>(scores.rows(), -1);
  if (scores.rows() <= scores.cols()) return MinCostRows(-scores);
  const std::vector<int> col_to_row = MinCostRows(-scores.transpose());
  std::vector<int> row_to_col(scores.rows(), -1);
  for (size_t j = 0; j < col_to_row.size(); ++j) row_to_col[col_to_row[j]] = j;
  return row_to_col;
}

Assignment FuseAndAssign(const ScoreMatrix& appearance, const ScoreMatrix* motion,
                         double weight, int top_k,
                         const std::vector<double>& confidences,
                         double threshold) {
  if (weight < 0.0) {
    throw Error(ErrorCategory::kInvalidArgument, "motion weight must be >= 0");
  }
  Assignment out;
  out.fused = appearance;
  if (motion != nullptr) {
    if (motion->rows() != appearance.rows() || motion->cols() != appearance.cols()) {
      throw Error(ErrorCategory::kShapeMismatch,
                  "motion scores are " + std::to_string(motion->rows()) + "x" +
                      std::to_string(motion->cols()) + ", appearance scores " +
                      std::to_string(appearance.rows()) + "x" +
                      std::to_string(appearance.cols()));
    }
    std::vector<char> keep(appearance.rows(), 1);
    if (top_k > 0 && top_k < appearance.rows()) {
      if (confidences.size() != static_cast<size_t>(appearance.rows())) {
        throw Error(ErrorCategory::kShapeMismatch,
                    "need one confidence per tracklet for top-k");
      }
      std::vector<int> order(appearance.rows());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return confidences[a] > confidences[b];
      });
      std::fill(keep.begin(), keep.end(), 0);
      for (int i = 0; i < top_k; ++i) keep[order[i]] = 1;
    }
    if (weight != 0.0) {
      for (int i = 0; i < appearance.rows(); ++i) {
        if (keep[i]) out.fused.row(i) += weight * motion->row(i);
      }
    }
  }
  const std::vector<int> cols = SolveAssignment(out.fused);
  std::vector<char> det_used(appearance.cols(), 0);
  for (int i = 0; i < appearance.rows(); ++i) {
    const int j = cols[i];
    if (j >= 0 && out.fused(i, j) >= threshold) {
      out.matches.emplace_back(i, j);
      det_used[j] = 1;
    } else {
      out.unmatched_tracklets.push_back(i);
    }
  }
  for (int j = 0; j < appearance.cols(); ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

KalmanFilter::KalmanFilter(const KalmanOptions& options) : options_(options) {}

Eigen::Vector2d KalmanFilter::Predict() {
  if (updates_ == 0) return center();
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = f(1, 3) = 1.0;
  const double q = options_.process_noise;
  Eigen::Matrix4d qm = Eigen::Matrix4d::Zero();
  for (int a = 0; a < 2; ++a) {
    qm(a, a) = 0.25 * q;
    qm(a, a + 2) = qm(a + 2, a) = 0.5 * q;
    qm(a + 2, a + 2) = q;
  }
  x_ = f * x_;
  p_ = f * p_ * f.transpose() + qm;
  ++steps_since_update_;
  return center();
}

void KalmanFilter::Update(const Eigen::Vector2d& z) {
  const double r = options_.measurement_noise;
  if (updates_ == 0) {
    x_ << z, 0.0, 0.0;
    p_ = Eigen::Vector4d(r, r, 1e4, 1e4).asDiagonal();
  } else if (updates_ == 1) {
    const double dt = std::max(1, steps_since_update_);
    x_ << z, (z - last_measurement_) / dt;
    p_.setZero();
    for (int a = 0; a < 2; ++a) {
      p_(a, a) = r;
      p_(a, a + 2) = p_(a + 2, a) = r / dt;
      p_(a + 2, a + 2) = 2.0 * r / (dt * dt);
    }
  } else {
    Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
    h(0, 0) = h(1, 1) = 1.0;
    const Eigen::Matrix2d rm = r * Eigen::Matrix2d::Identity();
    const Eigen::Matrix2d s = h * p_ * h.transpose() + rm;
    const Eigen::Matrix<double, 4, 2> k =
        p_ * h.transpose() * s.completeOrthogonalDecomposition().pseudoInverse();
    x_ += k * (z - h * x_);
    const Eigen::Matrix4d ikh = Eigen::Matrix4d::Identity() - k * h;
    p_ = ikh * p_ * ikh.transpose() + k * rm * k.transpose();
  }
  last_measurement_ = z;
  steps_since_update_ = 0;
  ++updates_;
}

ScoreMatrix KalmanScore(const std::vector<Eigen::Vector2d>& predicted_centers,
                        const std::vector<FrameMask>& detections, double sigma) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCategory::kInvalidArgument, "sigma must be > 0");
  }
  ScoreMatrix s = ScoreMatrix::Zero(predicted_centers.size(), detections.size());
  for (size_t j = 0; j < detections.size(); ++j) {
    bool ok = false;
    const Eigen::Vector2d c = Centroid(detections[j], &ok);
    if (!ok) continue;
    for (size_t i = 0; i < predicted_centers.size(); ++i) {
      s(i, j) = std::exp(-(predicted_centers[i] - c).norm() / sigma);
    }
  }
  return s;
}

std::string ScorerName(Scorer scorer) {
  switch (scorer) {
    case Scorer::kAppearance:
      return "appearance";
    case Scorer::kMotion:
      return "motion";
    case Scorer::kKalman:
      return "kalman";
  }
  return "?";
}

Scorer ParseScorer(const std::string& name) {
  std::string n = name;
  if (!n.empty() && n.front() == '+') n.erase(0, 1);
  for (Scorer s : {Scorer::kAppearance, Scorer::kMotion, Scorer::kKalman}) {
    if (n == ScorerName(s)) return s;
  }
  throw Error(ErrorCategory::kUsage,
              "unknown scorer '" + name + "' (appearance, +motion, +kalman)");
}

void TrackerConfig::Validate() const {
  auto fail = [](const std::string& m) { return Error(ErrorCategory::kConfig, m); };
  if (!(motion_weight >= 0.0)) throw fail("motion-weight must be >= 0");
  if (!std::isfinite(threshold)) throw fail("threshold must be finite");
  if (persistence < 0) throw fail("persistence must be >= 0");
  if (top_k < 0) throw fail("top-k must be >= 0");
  if (!(temperature > 0.0)) throw fail("temperature must be > 0");
  if (!(appearance_momentum >= 0.0 && appearance_momentum < 1.0)) {
    throw fail("appearance-momentum must be in [0, 1)");
  }
  if (!(kalman.process_noise >= 0.0) || !(kalman.measurement_noise >= 0.0)) {
    throw fail("kalman noise must be >= 0");
  }
}

nlohmann::json TrackerConfig::ToJson() const {
  return {{"scorer", ScorerName(scorer)},
          {"motion_weight", motion_weight},
          {"threshold", threshold},
          {"persistence", persistence},
          {"top_k", top_k},
          {"temperature", temperature},
          {"appearance_momentum", appearance_momentum},
          {"kalman_process_noise", kalman.process_noise},
          {"kalman_measurement_noise", kalman.measurement_noise}};
}

OnlineTracker::OnlineTracker(const TrackerConfig& config, const MotionNet* net,
                             int height, int width)
    : config_(config),
      net_(net),
      height_(height),
      width_(width),
      history_limit_(net ? net->config().max_history : 5) {
  config_.Validate();
  if (config_.scorer == Scorer::kMotion && net_ == nullptr) {
    throw Error(ErrorCategory::kUsage, "the motion scorer needs a checkpoint");
  }
}

std::optional<FrameMask> OnlineTracker::Forecast(
    const Tracklet& t, const ImageFrame* image,
    const Eigen::Vector2d& kalman_center) const {
  if (t.history.frames.size() < 2) return std::nullopt;
  switch (config_.scorer) {
    case Scorer::kMotion: {
      const ImageFrame* img = net_->config().refine_active() ? image : nullptr;
      return Binarize(net_->PredictAnySize(t.history, img));
    }
    case Scorer::kKalman: {
      bool ok = false;
      const Eigen::Vector2d c = Centroid(t.history.frames.back(), &ok);
      if (!ok) return t.history.frames.back();
      const Eigen::Vector2d d = kalman_center - c;
      return Shift(t.history.frames.back(), d.x(), d.y());
    }
    case Scorer::kAppearance:
      return t.history.frames.back();
  }
  return std::nullopt;
}

std::vector<TrackedMask> OnlineTracker::Step(int64_t frame_index,
                                             const std::vector<Detection>& detections,
                                             const ImageFrame* image,
                                             std::vector<double>* forecast_ious) {
  for (const auto& d : detections) {
    if (d.mask.height() != height_ || d.mask.width() != width_) {
      throw Error(ErrorCategory::kShapeMismatch,
                  "detection mask is " + std::to_string(d.mask.height()) + "x" +
                      std::to_string(d.mask.width()) + ", tracker expects " +
                      std::to_string(height_) + "x" + std::to_string(width_));
    }
  }
  const int rows = static_cast<int>(tracklets_.size());
  const int cols = static_cast<int>(detections.size());

  std::vector<Eigen::Vector2d> centers(rows);
  std::vector<std::optional<FrameMask>> forecasts(rows);
  std::vector<Embedding> track_emb(rows);
  std::vector<double> confidences(rows);
  for (int i = 0; i < rows; ++i) {
    Tracklet& t = tracklets_[i];
    centers[i] = t.kalman.Predict();
    forecasts[i] = Forecast(t, image, centers[i]);
    track_emb[i] = t.appearance;
    confidences[i] = t.confidence;
  }
  std::vector<Embedding> det_emb(cols);
  std::vector<FrameMask> det_masks(cols);
  for (int j = 0; j < cols; ++j) {
    det_emb[j] = detections[j].appearance;
    det_masks[j] = detections[j].mask;
  }

  const ScoreMatrix app = AppearanceScore(track_emb, det_emb, config_.temperature);
  ScoreMatrix extra;
  const ScoreMatrix* extra_ptr = nullptr;
  if (config_.scorer == Scorer::kMotion) {
    extra = MotionScore(forecasts, det_masks);
    extra_ptr = &extra;
  } else if (config_.scorer == Scorer::kKalman) {
    extra = KalmanScore(centers, det_masks,
                        std::hypot(height_, width_) / 10.0);
    extra_ptr = &extra;
  }
  const Assignment a = FuseAndAssign(app, extra_ptr, config_.motion_weight,
                                     config_.top_k, confidences,
                                     config_.threshold);

  std::vector<TrackedMask> out;
  auto push_history = [&](Tracklet& t, const FrameMask& m) {
    t.history.frames.push_back(m);
    t.history.frame_indices.push_back(frame_index);
    if (static_cast<int>(t.history.frames.size()) > history_limit_) {
      t.history.frames.erase(t.history.frames.begin());
      t.history.frame_indices.erase(t.history.frame_indices.begin());
    }
  };
  for (const auto& [i, j] : a.matches) {
    Tracklet& t = tracklets_[i];
    const Detection& d = detections[j];
    if (forecast_ious != nullptr && forecasts[i]) {
      forecast_ious->push_back(MaskIou(*forecasts[i], d.mask));
    }
    push_history(t, d.mask);
    const double m = config_.appearance_momentum;
    double norm = 0.0;
    for (size_t k = 0; k < t.appearance.size(); ++k) {
      t.appearance[k] = m * t.appearance[k] + (1.0 - m) * d.appearance[k];
      norm += t.appearance[k] * t.appearance[k];
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : t.appearance) v /= norm;
    } else {
      t.appearance = d.appearance;
    }
    t.confidence = kConfidenceDecay * t.confidence +
                   (1.0 - kConfidenceDecay) * d.confidence;
    bool ok = false;
    const Eigen::Vector2d c = Centroid(d.mask, &ok);
    if (ok) t.kalman.Update(c);
    t.missed = 0;
    ++t.age;
    out.push_back({frame_index, t.id, d.mask});
  }
  for (int i : a.unmatched_tracklets) {
    Tracklet& t = tracklets_[i];
    ++t.missed;
    ++t.age;
    t.confidence *= kConfidenceDecay;
    if (config_.scorer == Scorer::kMotion && forecasts[i]) {
      push_history(t, *forecasts[i]);
    }
  }
  std::erase_if(tracklets_, [&](const Tracklet& t) {
    return t.missed > config_.persistence;
  });
  for (int j : a.unmatched_detections) {
    const Detection& d = detections[j];
    Tracklet t;
    t.id = next_id_++;
    t.history.instance_id = "track" + std::to_string(t.id);
    t.appearance = d.appearance;
    t.confidence = d.confidence;
    t.kalman = KalmanFilter(config_.kalman);
    bool ok = false;
    const Eigen::Vector2d c = Centroid(d.mask, &ok);
    if (ok) t.kalman.Update(c);
    push_history(t, d.mask);
    out.push_back({frame_index, t.id, d.mask});
    tracklets_.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(), [](const TrackedMask& a, const TrackedMask& b) {
    return a.track_id < b.track_id;
  });
  return out;
}

std::vector<Detection> GroundTruthDetections(const Scene& scene, int frame) {
  std::vector<std::pair<int, Detection>> keyed;
  for (const auto& inst : scene.instances) {
    const FrameMask& m = inst.frames.at(frame);
    if (m.Empty()) continue;
    int first = 0;
    while (!m.at(first / m.width(), first % m.width())) ++first;
    Detection d;
    d.mask = m;
    d.appearance = AppearanceEmbedding(scene.images.at(frame), m);
    keyed.emplace_back(first, std::move(d));
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Detection> out;
  for (auto& [k, d] : keyed) out.push_back(std::move(d));
  return out;
}

TrackResult RunTracker(const Scene& scene,
                       const std::vector<std::vector<Detection>>& detections,
                       const TrackerConfig& config, const MotionNet* net) {
  if (scene.num_frames() == 0) {
    throw Error(ErrorCategory::kInvalidArgument, scene.id + ": empty scene");
  }
  if (static_cast<int>(detections.size()) != scene.num_frames()) {
    throw Error(ErrorCategory::kShapeMismatch,
                scene.id + ": need one detection list per frame");
  }
  TrackResult result;
  result.scene_id = scene.id;
  result.height = scene.spec.canvas_height;
  result.width = scene.spec.canvas_width;
  OnlineTracker tracker(config, net, result.height, result.width);
  for (int f = 0; f < scene.num_frames(); ++f) {
    const ImageFrame* image = f < static_cast<int>(scene.images.size())
                                  ? &scene.images[f]
                                  : nullptr;
    auto masks = tracker.Step(scene.frame_indices[f], detections[f], image,
                              &result.forecast_ious);
    for (auto& m : masks) result.masks.push_back(std::move(m));
  }
  return result;
}

std::string EncodeTrackResult(const TrackResult& result) {
  std::string out = "TRACKS " + std::to_string(result.height) + " " +
                    std::to_string(result.width) + "\n";
  for (const auto& m : result.masks) {
    out += "T " + std::to_string(m.frame_index) + " " +
           std::to_string(m.track_id) + " " + EncodeMaskRle(m.mask) + "\n";
  }
  return out;
}

TrackResult DecodeTrackResult(std::string_view text) {
  TrackResult result;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header = false;
  auto fail = [&](const std::string& what) {
    return Error(ErrorCategory::kFormat,
                 "line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string tag;
    fields >> tag;
    if (tag == "TRACKS") {
      if (header) throw fail("duplicate TRACKS header");
      if (!(fields >> result.height >> result.width) || result.height < 1 ||
          result.width < 1) {
        throw fail("expected 'TRACKS <height> <width>'");
      }
      header = true;
    } else if (tag == "T") {
      if (!header) throw fail("track record before the TRACKS header");
      TrackedMask m;
      std::string runs, extra;
      if (!(fields >> m.frame_index >> m.track_id >> runs) || (fields >> extra)) {
        throw fail("expected 'T <frame_index> <track_id> <runs>'");
      }
      try {
        m.mask = DecodeMaskRle(runs, result.height, result.width);
      } catch (const Error& e) {
        throw fail(e.what());
      }
      result.masks.push_back(std::move(m));
    } else {
      throw fail("unknown record tag '" + tag + "'");
    }
  }
  if (!header) throw Error(ErrorCategory::kFormat, "missing TRACKS header");
  return result;
}

double TrackingMetrics::idf1() const {
  const int denom = num_gt + num_pred;
  return denom == 0 ? 1.0 : 2.0 * idtp / denom;
}

double TrackingMetrics::motsa() const {
  return num_gt == 0 ? 0.0
                     : static_cast<double>(tp - fp - id_switches) / num_gt;
}

double TrackingMetrics::mean_iou() const { return tp == 0 ? 0.0 : iou_sum / tp; }

double TrackingMetrics::forecast_iou() const {
  return forecasts == 0 ? 0.0 : forecast_iou_sum / forecasts;
}

void TrackingMetrics::Accumulate(const TrackingMetrics& o) {
  num_gt += o.num_gt;
  num_pred += o.num_pred;
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  id_switches += o.id_switches;
  idtp += o.idtp;
  iou_sum += o.iou_sum;
  forecast_iou_sum += o.forecast_iou_sum;
  forecasts += o.forecasts;
}

nlohmann::json TrackingMetrics::ToJson() const {
  nlohmann::json j = {{"IDSw", id_switches},   {"IDF1", idf1()},
                      {"MOTSA", motsa()},      {"mean_iou", mean_iou()},
                      {"forecast_iou", forecast_iou()},
                      {"num_gt", num_gt},      {"num_pred", num_pred},
                      {"tp", tp},              {"fp", fp},
                      {"fn", fn}};
  if (!scene_id.empty()) j["scene"] = scene_id;
  return j;
}

TrackingMetrics EvaluateTracking(const Scene& scene, const TrackResult& result) {
  TrackingMetrics m;
  m.scene_id = scene.id;
  std::map<int64_t, int> frame_of;
  for (int f = 0; f < scene.num_frames(); ++f) frame_of[scene.frame_indices[f]] = f;
  std::vector<std::vector<const TrackedMask*>> preds(scene.num_frames());
  for (const auto& t : result.masks) {
    const auto it = frame_of.find(t.frame_index);
    if (it == frame_of.end()) {
      throw Error(ErrorCategory::kInvalidArgument,
                  scene.id + ": track result has unknown frame " +
                      std::to_string(t.frame_index));
    }
    if (t.mask.height() != scene.spec.canvas_height ||
        t.mask.width() != scene.spec.canvas_width) {
      throw Error(ErrorCategory::kShapeMismatch,
                  scene.id + ": track mask size differs from the scene");
    }
    preds[it->second].push_back(&t);
  }

  std::map<int, int> track_index;  // track id -> dense column
  for (const auto& t : result.masks) {
    track_index.emplace(t.track_id, static_cast<int>(track_index.size()));
  }
  const int num_gt_ids = static_cast<int>(scene.instances.size());
  Eigen::MatrixXd co = Eigen::MatrixXd::Zero(num_gt_ids, track_index.size());
  std::vector<int> last_track(num_gt_ids, -1);

  for (int f = 0; f < scene.num_frames(); ++f) {
    std::vector<int> gt;
    for (int k = 0; k < num_gt_ids; ++k) {
      if (!scene.instances[k].frames[f].Empty()) gt.push_back(k);
    }
    const auto& p = preds[f];
    m.num_gt += gt.size();
    m.num_pred += p.size();
    ScoreMatrix iou = ScoreMatrix::Zero(gt.size(), p.size());
    for (size_t a = 0; a < gt.size(); ++a)
      for (size_t b = 0; b < p.size(); ++b) {
        iou(a, b) = MaskIou(scene.instances[gt[a]].frames[f], p[b]->mask);
        if (iou(a, b) >= 0.5) co(gt[a], track_index.at(p[b]->track_id)) += 1.0;
      }
    const std::vector<int> match = SolveAssignment(iou);
    int tp = 0;
    for (size_t a = 0; a < gt.size(); ++a) {
      const int b = match[a];
      if (b < 0 || iou(a, b) < 0.5) continue;
      ++tp;
      m.iou_sum += iou(a, b);
      const int id = p[b]->track_id;
      if (last_track[gt[a]] >= 0 && last_track[gt[a]] != id) ++m.id_switches;
      last_track[gt[a]] = id;
    }
    m.tp += tp;
    m.fp += static_cast<int>(p.size()) - tp;
    m.fn += static_cast<int>(gt.size()) - tp;
  }
  if (co.size() > 0) {
    const std::vector<int> best = SolveAssignment(co);
    for (int k = 0; k < num_gt_ids; ++k) {
      if (best[k] >= 0) m.idtp += static_cast<int>(co(k, best[k]));
    }
  }
  for (double v : result.forecast_ious) m.forecast_iou_sum += v;
  m.forecasts = static_cast<int>(result.forecast_ious.size());
  return m;
}

nlohmann::json MetricsReport(const std::vector<TrackingMetrics>& per_scene) {
  TrackingMetrics total;
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& s : per_scene) {
    total.Accumulate(s);
    scenes.push_back(s.ToJson());
  }
  nlohmann::json j = total.ToJson();
  j["per_scene"] = std::move(scenes);
  return j;
}

}  // namespace maskmotion
