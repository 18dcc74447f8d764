#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "needletrack/camera.hpp"
#include "needletrack/ensemble.hpp"
#include "needletrack/grasp.hpp"
#include "needletrack/kernels.hpp"
#include "needletrack/observation.hpp"

namespace needletrack {

/// The five tracking algorithms. "rp" filters run on the reparameterized
/// grasp state and are feasible by construction; "rj" baselines enforce
/// feasibility on pose states by rejection; "pf" is the unconstrained
/// pose-state particle filter.
enum class FilterKind { pf, chfrj, cpfrj, chfrp, cpfrp };

FilterKind filter_kind_from_name(const std::string& name);
std::string_view filter_name(FilterKind kind);

struct FilterConfig {
  int n = 2000;
  /// Diagonal of the motion noise covariance: 4 entries for grasp-state
  /// filters (alpha, w, u, v), 6 for pose-state filters (position xyz in mm,
  /// orientation xyz in rad).
  Eigen::VectorXd motion_cov_diag;
  /// Resample when the effective particle count falls below this; negative
  /// means n / 2.
  double n_eff_threshold = -1.0;
  std::uint64_t seed = 0;
  /// Motion redraw budget per particle for the rejection PF baseline.
  int retry_limit = 100;
  /// Proposal box scale for rejection pre-collection: 0 samples the grasp
  /// manifold itself (the perfectly matched proposal), positive values
  /// sample an axis-aligned pose box of the manifold's bounding box scaled
  /// per dimension.
  double proposal_box_scale = 10.0;
  std::int64_t prefilter_max_attempts = 2000000;
  Exec exec = Exec::parallel;
};

/// Immutable scene description shared by every filter in a trial.
struct TrackerContext {
  GraspBounds bounds = GraspBounds::defaults();
  NeedleSpec needle;
  StereoRig rig;
  ObservationParams observation;
};

struct StepResult {
  Pose mean_pose;
  std::optional<GraspState> mean_state;  // grasp-state filters only
  double n_eff = 0.0;
  bool resampled = false;
};

/// Geometric feasibility test for a needle pose against an end-effector
/// pose: the grasp-state recovery must succeed, land inside the bounds box,
/// and the end-effector y-axis must pass within residual_tol_mm of the
/// needle-circle point it selects.
class FeasibilityOracle {
 public:
  FeasibilityOracle(const GraspBounds& bounds, const NeedleSpec& needle,
                    double residual_tol_mm = 0.1)
      : bounds_(bounds), needle_(needle), tol_(residual_tol_mm) {}

  bool pass(const Pose& needle_pose_cam, const Pose& ee_pose_cam) const;

 private:
  GraspBounds bounds_;
  NeedleSpec needle_;
  double tol_;
};

/// Weighted mean of poses: arithmetic mean of positions plus the chordal
/// rotation mean (principal eigenvector of the weighted quaternion outer
/// product). May be infeasible even when every input is feasible.
Pose weighted_mean_pose(const std::vector<Pose>& poses,
                        const Eigen::VectorXd& weights);

struct PrefilterResult {
  std::vector<Pose> poses;
  std::int64_t attempts = 0;
  double acceptance_rate() const {
    return attempts > 0 ? static_cast<double>(poses.size()) /
                              static_cast<double>(attempts)
                        : 0.0;
  }
};

/// Collect up to n feasible pose states by rejection sampling from the
/// configured proposal (see FilterConfig::proposal_box_scale), stopping at
/// max_attempts. Never throws on shortfall; callers inspect the count.
PrefilterResult rejection_prefilter_collect(const GraspBounds& bounds,
                                            const Pose& ee_pose_cam,
                                            const NeedleSpec& needle,
                                            std::size_t n,
                                            std::int64_t max_attempts,
                                            double box_scale,
                                            std::uint64_t seed);

/// Thrown by rejection_prefilter when the attempt budget runs out short of
/// n accepted samples; carries whatever was collected.
struct InsufficientSamplesError : std::runtime_error {
  InsufficientSamplesError(std::string msg, PrefilterResult partial_result)
      : std::runtime_error(std::move(msg)), partial(std::move(partial_result)) {}
  PrefilterResult partial;
};

/// As rejection_prefilter_collect, but throws InsufficientSamplesError on
/// shortfall.
PrefilterResult rejection_prefilter(const GraspBounds& bounds,
                                    const Pose& ee_pose_cam,
                                    const NeedleSpec& needle, std::size_t n,
                                    std::int64_t max_attempts,
                                    double box_scale, std::uint64_t seed);

/// Single-owner sequential tracker. The first step() initializes the
/// ensemble from the frame and applies the observation; later steps run
/// predict + update (+ resampling where the algorithm calls for it).
class Tracker {
 public:
  virtual ~Tracker() = default;
  virtual StepResult step(const DetectionFrame& frame) = 0;
  virtual std::string_view name() const = 0;
  /// Current ensemble weight sum (normalization audit hook).
  virtual double weight_sum() const = 0;
  virtual const Eigen::VectorXd& weights() const = 0;
};

std::unique_ptr<Tracker> make_tracker(FilterKind kind,
                                      const TrackerContext& ctx,
                                      const FilterConfig& cfg);

/// Grasp-state particle filter (feasible by construction). Exposed as a
/// concrete class for tests that poke at the ensemble.
class ReparamParticleFilter final : public Tracker {
 public:
  ReparamParticleFilter(const TrackerContext& ctx, const FilterConfig& cfg);
  StepResult step(const DetectionFrame& frame) override;
  std::string_view name() const override { return "cPFrp"; }
  double weight_sum() const override { return ensemble_.weights.sum(); }
  const Eigen::VectorXd& weights() const override {
    return ensemble_.weights;
  }
  const WeightedEnsemble<GraspState>& ensemble() const { return ensemble_; }

 private:
  TrackerContext ctx_;
  FilterConfig cfg_;
  LikelihoodModel model_;
  WeightedEnsemble<GraspState> ensemble_;
  std::vector<Pose> pose_scratch_;
  int step_index_ = 0;
};

/// Grasp-state histogram filter: fixed support points sampled once, weights
/// diffused by a precomputed truncated-Gaussian kernel.
class ReparamHistogramFilter final : public Tracker {
 public:
  ReparamHistogramFilter(const TrackerContext& ctx, const FilterConfig& cfg);
  StepResult step(const DetectionFrame& frame) override;
  std::string_view name() const override { return "cHFrp"; }
  double weight_sum() const override { return ensemble_.weights.sum(); }
  const Eigen::VectorXd& weights() const override {
    return ensemble_.weights;
  }
  const WeightedEnsemble<GraspState>& ensemble() const { return ensemble_; }

 private:
  TrackerContext ctx_;
  FilterConfig cfg_;
  LikelihoodModel model_;
  WeightedEnsemble<GraspState> ensemble_;
  DiffusionKernel kernel_;
  std::vector<Pose> pose_scratch_;
  int step_index_ = 0;
};

/// Unconstrained pose-state particle filter: particles ride along with the
/// measured end-effector motion plus Gaussian pose noise. No feasibility
/// guarantee.
class PoseParticleFilter : public Tracker {
 public:
  PoseParticleFilter(const TrackerContext& ctx, const FilterConfig& cfg);
  StepResult step(const DetectionFrame& frame) override;
  std::string_view name() const override { return "PF"; }
  double weight_sum() const override { return ensemble_.weights.sum(); }
  const Eigen::VectorXd& weights() const override {
    return ensemble_.weights;
  }
  const WeightedEnsemble<Pose>& ensemble() const { return ensemble_; }

 protected:
  virtual void initialize_ensemble(const DetectionFrame& frame);
  virtual void predict(const HomogeneousTransform& ee_delta,
                       const DetectionFrame& frame);
  Pose transported(const Pose& p, const HomogeneousTransform& delta) const;
  Pose noisy(const Pose& p, std::uint64_t seed) const;

  TrackerContext ctx_;
  FilterConfig cfg_;
  LikelihoodModel model_;
  WeightedEnsemble<Pose> ensemble_;
  std::optional<Pose> last_ee_;
  int step_index_ = 0;
};

/// Pose-state particle filter with per-particle rejection: after transport,
/// motion noise is redrawn until the feasibility oracle accepts, up to the
/// retry budget; particles that never pass keep zero weight for the step.
class RejectionParticleFilter final : public PoseParticleFilter {
 public:
  RejectionParticleFilter(const TrackerContext& ctx, const FilterConfig& cfg);
  std::string_view name() const override { return "cPFrj"; }
  std::int64_t last_step_redraws() const { return last_step_redraws_; }
  const PrefilterResult& init_prefilter() const { return init_prefilter_; }

 protected:
  void initialize_ensemble(const DetectionFrame& frame) override;
  void predict(const HomogeneousTransform& ee_delta,
               const DetectionFrame& frame) override;

 private:
  FeasibilityOracle oracle_;
  PrefilterResult init_prefilter_;
  std::int64_t last_step_redraws_ = 0;
};

/// Pose-state histogram filter over support pre-collected by rejection
/// sampling. Support poses are fixed relative to the measured end-effector
/// frame and transported rigidly with it; the diffusion kernel over the
/// (invariant) relative geometry is built once.
class RejectionHistogramFilter final : public Tracker {
 public:
  RejectionHistogramFilter(const TrackerContext& ctx,
                           const FilterConfig& cfg);
  StepResult step(const DetectionFrame& frame) override;
  std::string_view name() const override { return "cHFrj"; }
  double weight_sum() const override { return weights_.sum(); }
  const Eigen::VectorXd& weights() const override { return weights_; }
  const std::vector<Pose>& support_in_ee() const { return support_in_ee_; }

 private:
  TrackerContext ctx_;
  FilterConfig cfg_;
  LikelihoodModel model_;
  std::vector<Pose> support_in_ee_;
  Eigen::VectorXd weights_;
  DiffusionKernel kernel_;
  std::vector<Pose> pose_scratch_;
  int step_index_ = 0;
};

}  // namespace needletrack
