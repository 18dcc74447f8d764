#include "needletrack/observation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace needletrack {

LikelihoodModel::LikelihoodModel(const StereoRig& rig,
                                 const NeedleSpec& needle,
                                 const ObservationParams& params)
    : rig_(rig), params_(params) {
  if (!(params.sigma_o_px > 0.0)) {
    throw std::invalid_argument("LikelihoodModel: sigma_o must be > 0");
  }
  if (params.curve_samples < 8) {
    throw std::invalid_argument("LikelihoodModel: curve_samples must be >= 8");
  }
  if (params.outlier_weight < 0.0 || params.outlier_weight >= 1.0) {
    throw std::invalid_argument(
        "LikelihoodModel: outlier_weight must lie in [0, 1)");
  }
  const auto k = static_cast<std::size_t>(params.curve_samples);
  local_arc_.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double a = needle.arc_span_rad * static_cast<double>(i) /
                     static_cast<double>(k - 1);
    local_arc_.emplace_back(needle.radius_mm * std::cos(a),
                            needle.radius_mm * std::sin(a), 0.0);
  }
  arc_matrix_.resize(3, static_cast<long>(k));
  for (std::size_t i = 0; i < k; ++i) arc_matrix_.col(static_cast<long>(i)) = local_arc_[i];
}

double LikelihoodModel::log_likelihood(const Pose& candidate_pose,
                                       const DetectionFrame& frame) const {
  const auto h = HomogeneousTransform::from_pose(candidate_pose);
  const double inv_two_sigma_sq =
      1.0 / (2.0 * params_.sigma_o_px * params_.sigma_o_px);
  const double floor_sq = params_.floor_miss_px * params_.floor_miss_px;
  const double eps = params_.outlier_weight;

  const long k = static_cast<long>(local_arc_.size());
  const Eigen::Matrix3Xd in_camera =
      (h.R * arc_matrix_).colwise() + h.t;

  double total = 0.0;
  Eigen::Matrix2Xd samples(2, k);
  for (int c = 0; c < StereoRig::kNumCameras; ++c) {
    const auto& detections = frame.points[c];
    if (detections.empty()) continue;
    const CameraModel& cam = rig_.camera(c);

    long visible = 0;
    for (long i = 0; i < k; ++i) {
      const Eigen::Vector3d p = cam.extrinsic.apply(in_camera.col(i));
      if (p.z() <= 1e-6) continue;
      samples.col(visible++) = Eigen::Vector2d(
          cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
    }

    if (visible == 0) {
      total -= static_cast<double>(detections.size()) * floor_sq *
               inv_two_sigma_sq;
      continue;
    }
    const auto view = samples.leftCols(visible);
    for (const auto& det : detections) {
      const double best =
          (view.colwise() - det).colwise().squaredNorm().minCoeff();
      if (eps > 0.0) {
        // Mixture with a floor component: never worse than the miss penalty.
        const double g = -best * inv_two_sigma_sq;
        const double f = -floor_sq * inv_two_sigma_sq;
        const double m = std::max(g, f);
        total += m + std::log((1.0 - eps) * std::exp(g - m) +
                              eps * std::exp(f - m));
      } else {
        total -= best * inv_two_sigma_sq;
      }
    }
  }
  return total;
}

double LikelihoodModel::max_projected_gap_px(
    const Pose& candidate_pose, const DetectionFrame& frame) const {
  (void)frame;
  const auto h = HomogeneousTransform::from_pose(candidate_pose);
  double max_gap = 0.0;
  for (int c = 0; c < StereoRig::kNumCameras; ++c) {
    const CameraModel& cam = rig_.camera(c);
    std::optional<Eigen::Vector2d> prev;
    for (const auto& p : local_arc_) {
      const auto px = project(h.apply(p), cam);
      if (px && prev) max_gap = std::max(max_gap, (*px - *prev).norm());
      prev = px;
    }
  }
  return max_gap;
}

double log_likelihood(const Pose& candidate_pose, const DetectionFrame& frame,
                      const StereoRig& rig, const NeedleSpec& needle,
                      const ObservationParams& params) {
  return LikelihoodModel(rig, needle, params)
      .log_likelihood(candidate_pose, frame);
}

void apply_log_likelihoods(Eigen::VectorXd& weights,
                           const Eigen::VectorXd& log_liks) {
  if (weights.size() != log_liks.size()) {
    throw std::invalid_argument("apply_log_likelihoods: size mismatch");
  }
  const double shift = log_liks.maxCoeff();
  Eigen::VectorXd updated(weights.size());
  for (long i = 0; i < weights.size(); ++i) {
    updated[i] = weights[i] * std::exp(log_liks[i] - shift);
  }
  const double total = updated.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    // The observation carries no usable information (all mass underflowed
    // on zero-weight candidates); keep the prior weights.
    return;
  }
  weights = updated / total;
}

}  // namespace needletrack
