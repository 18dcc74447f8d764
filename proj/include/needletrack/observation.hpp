#pragma once

#include <vector>

#include <Eigen/Core>

#include "needletrack/camera.hpp"
#include "needletrack/grasp.hpp"
#include "needletrack/se3.hpp"

namespace needletrack {

struct ObservationParams {
  /// Pixel standard deviation of the point-to-curve matching model.
  double sigma_o_px = 3.0;
  /// Discretization density of the projected needle arc.
  int curve_samples = 64;
  /// A detection with no visible curve to match against costs the same as a
  /// miss of this many pixels; keeps scores finite for degenerate candidates.
  double floor_miss_px = 50.0;
  /// Optional outlier mixture weight in [0, 1). Zero (default) gives the
  /// pure Gaussian point-matching cost; positive values floor each
  /// detection's cost at the miss penalty with this mixing weight.
  double outlier_weight = 0.0;
};

/// Point-matching observation model: score a candidate needle pose by the
/// squared distances from each detected keypoint to the nearest sample of
/// the candidate's projected arc, summed over both cameras, scaled by
/// -1/(2 sigma_o^2). Pure and safe to evaluate from many threads.
class LikelihoodModel {
 public:
  LikelihoodModel(const StereoRig& rig, const NeedleSpec& needle,
                  const ObservationParams& params);

  double log_likelihood(const Pose& candidate_pose,
                        const DetectionFrame& frame) const;

  const ObservationParams& params() const { return params_; }

  /// Largest gap between adjacent projected curve samples for this pose;
  /// bounds the discretization error of the nearest-sample matching.
  double max_projected_gap_px(const Pose& candidate_pose,
                              const DetectionFrame& frame) const;

 private:
  StereoRig rig_;
  ObservationParams params_;
  std::vector<Eigen::Vector3d> local_arc_;
  Eigen::Matrix3Xd arc_matrix_;  // local_arc_ as columns
};

double log_likelihood(const Pose& candidate_pose, const DetectionFrame& frame,
                      const StereoRig& rig, const NeedleSpec& needle,
                      const ObservationParams& params);

/// Bayes reweighting: w_i' ~ w_i * exp(ll_i), renormalized in the max-shifted
/// domain so the update never over/underflows. When every candidate carries
/// the same score (e.g. all at the floor) the weights come back unchanged.
void apply_log_likelihoods(Eigen::VectorXd& weights,
                           const Eigen::VectorXd& log_liks);

}  // namespace needletrack
