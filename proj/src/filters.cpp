#include "needletrack/filters.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <stdexcept>

namespace needletrack {

namespace {

// Stream tags for deterministic per-purpose RNG derivation.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPredictStream = 2;
constexpr std::uint64_t kResampleStream = 3;
constexpr std::uint64_t kPrefilterStream = 4;

constexpr double kKernelTruncationSq = 40.0;

void validate_common(const FilterConfig& cfg, int cov_size) {
  if (cfg.n < 1) {
    throw std::invalid_argument("FilterConfig: n must be >= 1");
  }
  if (cfg.motion_cov_diag.size() != cov_size) {
    throw std::invalid_argument("FilterConfig: motion_cov_diag must have " +
                                std::to_string(cov_size) + " entries");
  }
  if ((cfg.motion_cov_diag.array() < 0.0).any()) {
    throw std::invalid_argument(
        "FilterConfig: motion covariance diagonal must be nonnegative");
  }
  const double thresh = cfg.n_eff_threshold;
  if (thresh >= 0.0 && (thresh < 1.0 || thresh > cfg.n)) {
    throw std::invalid_argument(
        "FilterConfig: n_eff_threshold must lie in [1, n]");
  }
}

double resolve_threshold(const FilterConfig& cfg) {
  return cfg.n_eff_threshold < 0.0 ? cfg.n / 2.0 : cfg.n_eff_threshold;
}

Eigen::Vector4d gaussian4(const Eigen::Vector4d& std_devs,
                          std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector4d out;
  for (int k = 0; k < 4; ++k) {
    out[k] = std_devs[k] > 0.0 ? std_devs[k] * normal(rng) : 0.0;
  }
  return out;
}

Eigen::Vector4d quaternion_of(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  Eigen::Vector4d q(1.0, 0.0, 0.0, 0.0);
  if (angle > 1e-12) {
    const Eigen::Vector3d v = std::sin(0.5 * angle) * (axis_angle / angle);
    q << std::cos(0.5 * angle), v.x(), v.y(), v.z();
  }
  return q;
}

}  // namespace

FilterKind filter_kind_from_name(const std::string& name) {
  if (name == "PF") return FilterKind::pf;
  if (name == "cHFrj") return FilterKind::chfrj;
  if (name == "cPFrj") return FilterKind::cpfrj;
  if (name == "cHFrp") return FilterKind::chfrp;
  if (name == "cPFrp") return FilterKind::cpfrp;
  throw std::invalid_argument("unknown filter name: " + name);
}

std::string_view filter_name(FilterKind kind) {
  switch (kind) {
    case FilterKind::pf:
      return "PF";
    case FilterKind::chfrj:
      return "cHFrj";
    case FilterKind::cpfrj:
      return "cPFrj";
    case FilterKind::chfrp:
      return "cHFrp";
    case FilterKind::cpfrp:
      return "cPFrp";
  }
  throw std::invalid_argument("unknown filter kind");
}

bool FeasibilityOracle::pass(const Pose& needle_pose_cam,
                             const Pose& ee_pose_cam) const {
  const auto recovered =
      pose_to_state(needle_pose_cam, ee_pose_cam, needle_, bounds_);
  if (!recovered) return false;
  return recovered->grasp_residual_mm < tol_ &&
         is_feasible(recovered->state, bounds_);
}

Pose weighted_mean_pose(const std::vector<Pose>& poses,
                        const Eigen::VectorXd& weights) {
  if (poses.empty() || weights.size() != static_cast<long>(poses.size())) {
    throw std::invalid_argument(
        "weighted_mean_pose: empty ensemble or size mismatch");
  }
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const double w = weights[static_cast<long>(i)];
    b += w * poses[i].b;
    const Eigen::Vector4d q = quaternion_of(poses[i].q);
    m += w * (q * q.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> solver(m);
  Eigen::Vector4d q = solver.eigenvectors().col(3);
  if (q[0] < 0.0) q = -q;
  const double vn = q.tail<3>().norm();
  const double angle = 2.0 * std::atan2(vn, q[0]);
  Pose out;
  out.b = b;
  out.q = vn > 1e-12 ? Eigen::Vector3d(angle * q.tail<3>() / vn)
                     : Eigen::Vector3d::Zero();
  return out;
}

PrefilterResult rejection_prefilter_collect(const GraspBounds& bounds,
                                            const Pose& ee_pose_cam,
                                            const NeedleSpec& needle,
                                            std::size_t n,
                                            std::int64_t max_attempts,
                                            double box_scale,
                                            std::uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("rejection_prefilter: n must be >= 1");
  }
  const FeasibilityOracle oracle(bounds, needle);
  PrefilterResult result;
  result.poses.reserve(n);

  if (box_scale <= 0.0) {
    // Matched proposal: sample the grasp box and push it through the
    // state-to-pose map. Rejections only come from round-trip rounding at
    // the box boundary.
    for (std::int64_t a = 0; a < max_attempts && result.poses.size() < n;
         ++a) {
      ++result.attempts;
      const auto s = sample_feasible(
          bounds, 1, mix_seed(seed, kPrefilterStream, a))[0];
      const Pose pose = state_to_pose(s, ee_pose_cam, needle, bounds);
      if (oracle.pass(pose, ee_pose_cam)) result.poses.push_back(pose);
    }
    return result;
  }

  // Axis-aligned proposal box: bounding box of the feasible manifold's
  // image, scaled per dimension about its center.
  constexpr std::size_t kProbe = 4096;
  Eigen::Matrix<double, 6, 1> lo, hi;
  lo.setConstant(std::numeric_limits<double>::infinity());
  hi.setConstant(-std::numeric_limits<double>::infinity());
  const auto probes =
      sample_feasible(bounds, kProbe, mix_seed(seed, kPrefilterStream, 0));
  for (const auto& s : probes) {
    const Pose p = state_to_pose(s, ee_pose_cam, needle, bounds);
    Eigen::Matrix<double, 6, 1> x;
    x << p.b, canonicalize_axis_angle(p.q);
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  const Eigen::Matrix<double, 6, 1> center = 0.5 * (lo + hi);
  const Eigen::Matrix<double, 6, 1> half = 0.5 * box_scale * (hi - lo);

  for (std::int64_t a = 0; a < max_attempts && result.poses.size() < n; ++a) {
    ++result.attempts;
    SplitMix64 rng(mix_seed(seed, kPrefilterStream, 1, a));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::Matrix<double, 6, 1> x;
    for (int k = 0; k < 6; ++k) x[k] = center[k] + half[k] * unit(rng);
    Pose pose;
    pose.b = x.head<3>();
    pose.q = canonicalize_axis_angle(x.tail<3>());
    if (oracle.pass(pose, ee_pose_cam)) result.poses.push_back(pose);
  }
  return result;
}

PrefilterResult rejection_prefilter(const GraspBounds& bounds,
                                    const Pose& ee_pose_cam,
                                    const NeedleSpec& needle, std::size_t n,
                                    std::int64_t max_attempts,
                                    double box_scale, std::uint64_t seed) {
  PrefilterResult result = rejection_prefilter_collect(
      bounds, ee_pose_cam, needle, n, max_attempts, box_scale, seed);
  if (result.poses.size() < n) {
    throw InsufficientSamplesError(
        "rejection_prefilter: collected " +
            std::to_string(result.poses.size()) + " of " + std::to_string(n) +
            " samples in " + std::to_string(result.attempts) + " attempts",
        std::move(result));
  }
  return result;
}

// ---------------------------------------------------------------------------
// cPFrp

ReparamParticleFilter::ReparamParticleFilter(const TrackerContext& ctx,
                                             const FilterConfig& cfg)
    : ctx_(ctx),
      cfg_(cfg),
      model_(ctx.rig, ctx.needle, ctx.observation) {
  validate_common(cfg_, 4);
}

StepResult ReparamParticleFilter::step(const DetectionFrame& frame) {
  const long n = cfg_.n;
  if (step_index_ == 0) {
    ensemble_.states = sample_feasible(ctx_.bounds, static_cast<std::size_t>(n),
                                       mix_seed(cfg_.seed, kInitStream));
    ensemble_.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  } else {
    const Eigen::Vector4d stds = cfg_.motion_cov_diag.cwiseSqrt();
    auto& states = ensemble_.states;
    const bool par = cfg_.exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
    for (long i = 0; i < n; ++i) {
      const Eigen::Vector4d noise = gaussian4(
          stds, mix_seed(cfg_.seed, kPredictStream,
                         static_cast<std::uint64_t>(step_index_),
                         static_cast<std::uint64_t>(i)));
      states[static_cast<std::size_t>(i)] =
          clip_motion(states[static_cast<std::size_t>(i)],
                      Eigen::Vector4d::Zero(), noise, ctx_.bounds);
    }
  }

  pose_scratch_.resize(static_cast<std::size_t>(n));
  const bool par = cfg_.exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < n; ++i) {
    pose_scratch_[static_cast<std::size_t>(i)] =
        state_to_pose(ensemble_.states[static_cast<std::size_t>(i)],
                      frame.ee_pose, ctx_.needle, ctx_.bounds);
  }
  const Eigen::VectorXd lls =
      batch_log_likelihoods(model_, pose_scratch_, frame, cfg_.exec);
  apply_log_likelihoods(ensemble_.weights, lls);
  check_normalized(ensemble_.weights);

  StepResult result;
  result.n_eff = effective_particles(ensemble_.weights);
  if (result.n_eff < resolve_threshold(cfg_)) {
    stratified_resample(ensemble_,
                        mix_seed(cfg_.seed, kResampleStream,
                                 static_cast<std::uint64_t>(step_index_)));
    result.resampled = true;
  }
  result.mean_state =
      weighted_mean_state(ensemble_.states, ensemble_.weights);
  result.mean_pose = state_to_pose(*result.mean_state, frame.ee_pose,
                                   ctx_.needle, ctx_.bounds);
  ++step_index_;
  return result;
}

// ---------------------------------------------------------------------------
// cHFrp

ReparamHistogramFilter::ReparamHistogramFilter(const TrackerContext& ctx,
                                               const FilterConfig& cfg)
    : ctx_(ctx),
      cfg_(cfg),
      model_(ctx.rig, ctx.needle, ctx.observation) {
  validate_common(cfg_, 4);
}

StepResult ReparamHistogramFilter::step(const DetectionFrame& frame) {
  const long n = cfg_.n;
  if (step_index_ == 0) {
    ensemble_.states = sample_feasible(ctx_.bounds, static_cast<std::size_t>(n),
                                       mix_seed(cfg_.seed, kInitStream));
    ensemble_.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
    const Eigen::Vector4d variances = cfg_.motion_cov_diag;
    const auto& states = ensemble_.states;
    kernel_ = DiffusionKernel::build(
        static_cast<std::size_t>(n),
        [&states, &variances](std::size_t i, std::size_t j) {
          return diag_sq_mahalanobis(states[i].to_vec(), states[j].to_vec(),
                                     variances);
        },
        kKernelTruncationSq);
  } else {
    Eigen::VectorXd diffused;
    kernel_.apply(ensemble_.weights, diffused, cfg_.exec);
    normalize_weights(diffused);
    ensemble_.weights = diffused;
  }

  pose_scratch_.resize(static_cast<std::size_t>(n));
  const bool par = cfg_.exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < n; ++i) {
    pose_scratch_[static_cast<std::size_t>(i)] =
        state_to_pose(ensemble_.states[static_cast<std::size_t>(i)],
                      frame.ee_pose, ctx_.needle, ctx_.bounds);
  }
  const Eigen::VectorXd lls =
      batch_log_likelihoods(model_, pose_scratch_, frame, cfg_.exec);
  apply_log_likelihoods(ensemble_.weights, lls);
  check_normalized(ensemble_.weights);

  StepResult result;
  result.n_eff = effective_particles(ensemble_.weights);
  result.mean_state =
      weighted_mean_state(ensemble_.states, ensemble_.weights);
  result.mean_pose = state_to_pose(*result.mean_state, frame.ee_pose,
                                   ctx_.needle, ctx_.bounds);
  ++step_index_;
  return result;
}

// ---------------------------------------------------------------------------
// PF

PoseParticleFilter::PoseParticleFilter(const TrackerContext& ctx,
                                       const FilterConfig& cfg)
    : ctx_(ctx),
      cfg_(cfg),
      model_(ctx.rig, ctx.needle, ctx.observation) {
  validate_common(cfg_, 6);
}

Pose PoseParticleFilter::transported(const Pose& p,
                                     const HomogeneousTransform& delta) const {
  return compose(delta, HomogeneousTransform::from_pose(p)).to_pose();
}

Pose PoseParticleFilter::noisy(const Pose& p, std::uint64_t seed) const {
  SplitMix64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Pose out = p;
  for (int k = 0; k < 3; ++k) {
    const double s = std::sqrt(cfg_.motion_cov_diag[k]);
    if (s > 0.0) out.b[k] += s * normal(rng);
  }
  Eigen::Vector3d dq = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) {
    const double s = std::sqrt(cfg_.motion_cov_diag[3 + k]);
    if (s > 0.0) dq[k] = s * normal(rng);
  }
  if (dq.norm() > 0.0) {
    out.q = matrix_to_axis_angle(axis_angle_to_matrix(dq) *
                                 axis_angle_to_matrix(p.q));
  }
  return out;
}

void PoseParticleFilter::predict(const HomogeneousTransform& ee_delta,
                                 const DetectionFrame& frame) {
  (void)frame;
  const long n = cfg_.n;
  const bool par = cfg_.exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < n; ++i) {
    auto& p = ensemble_.states[static_cast<std::size_t>(i)];
    p = noisy(transported(p, ee_delta),
              mix_seed(cfg_.seed, kPredictStream,
                       static_cast<std::uint64_t>(step_index_),
                       static_cast<std::uint64_t>(i)));
  }
}

void PoseParticleFilter::initialize_ensemble(const DetectionFrame& frame) {
  const long n = cfg_.n;
  const auto states = sample_feasible(ctx_.bounds, static_cast<std::size_t>(n),
                                      mix_seed(cfg_.seed, kInitStream));
  ensemble_.states.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    ensemble_.states[static_cast<std::size_t>(i)] =
        state_to_pose(states[static_cast<std::size_t>(i)], frame.ee_pose,
                      ctx_.needle, ctx_.bounds);
  }
  ensemble_.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
}

StepResult PoseParticleFilter::step(const DetectionFrame& frame) {
  if (step_index_ == 0) {
    initialize_ensemble(frame);
  } else {
    const auto delta =
        compose(HomogeneousTransform::from_pose(frame.ee_pose),
                HomogeneousTransform::from_pose(*last_ee_).inverse());
    predict(delta, frame);
  }
  last_ee_ = frame.ee_pose;

  const Eigen::VectorXd lls =
      batch_log_likelihoods(model_, ensemble_.states, frame, cfg_.exec);
  apply_log_likelihoods(ensemble_.weights, lls);
  check_normalized(ensemble_.weights);

  StepResult result;
  result.n_eff = effective_particles(ensemble_.weights);
  if (result.n_eff < resolve_threshold(cfg_)) {
    stratified_resample(ensemble_,
                        mix_seed(cfg_.seed, kResampleStream,
                                 static_cast<std::uint64_t>(step_index_)));
    result.resampled = true;
  }
  result.mean_pose = weighted_mean_pose(ensemble_.states, ensemble_.weights);
  ++step_index_;
  return result;
}

// ---------------------------------------------------------------------------
// cPFrj

RejectionParticleFilter::RejectionParticleFilter(const TrackerContext& ctx,
                                                 const FilterConfig& cfg)
    : PoseParticleFilter(ctx, cfg), oracle_(ctx.bounds, ctx.needle) {}

void RejectionParticleFilter::initialize_ensemble(const DetectionFrame& frame) {
  const auto n = static_cast<std::size_t>(cfg_.n);
  init_prefilter_ = rejection_prefilter_collect(
      ctx_.bounds, frame.ee_pose, ctx_.needle, n, cfg_.prefilter_max_attempts,
      cfg_.proposal_box_scale, mix_seed(cfg_.seed, kInitStream));
  ensemble_.states = init_prefilter_.poses;
  if (ensemble_.states.size() < n) {
    // Attempt budget ran out; top up from the matched proposal.
    auto extra = rejection_prefilter_collect(
        ctx_.bounds, frame.ee_pose, ctx_.needle, n - ensemble_.states.size(),
        cfg_.prefilter_max_attempts, 0.0, mix_seed(cfg_.seed, kInitStream, 1));
    ensemble_.states.insert(ensemble_.states.end(), extra.poses.begin(),
                            extra.poses.end());
  }
  if (ensemble_.states.size() < n) {
    throw InvariantError("cPFrj: could not collect initial particles");
  }
  ensemble_.weights =
      Eigen::VectorXd::Constant(cfg_.n, 1.0 / static_cast<double>(cfg_.n));
}

void RejectionParticleFilter::predict(const HomogeneousTransform& ee_delta,
                                      const DetectionFrame& frame) {
  const long n = cfg_.n;
  Eigen::VectorXd weights = ensemble_.weights;
  std::int64_t redraws = 0;
  const bool par = cfg_.exec == Exec::parallel;
#pragma omp parallel for schedule(static) reduction(+ : redraws) if (par)
  for (long i = 0; i < n; ++i) {
    auto& p = ensemble_.states[static_cast<std::size_t>(i)];
    const Pose base = transported(p, ee_delta);
    const std::uint64_t particle_seed =
        mix_seed(cfg_.seed, kPredictStream,
                 static_cast<std::uint64_t>(step_index_),
                 static_cast<std::uint64_t>(i));
    bool accepted = false;
    for (int r = 0; r < cfg_.retry_limit; ++r) {
      if (r > 0) ++redraws;  // draws beyond the first attempt
      const Pose candidate =
          noisy(base, mix_seed(particle_seed, static_cast<std::uint64_t>(r)));
      if (oracle_.pass(candidate, frame.ee_pose)) {
        p = candidate;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Keep the transported particle but kill its weight for this step.
      p = base;
      weights[i] = 0.0;
    }
  }
  last_step_redraws_ = redraws;
  const double total = weights.sum();
  if (total > 0.0) {
    ensemble_.weights = weights / total;
  }
  // else: every particle exhausted its retries; keep the prior weights so
  // the filter can limp on rather than divide by zero.
}

// ---------------------------------------------------------------------------
// cHFrj

RejectionHistogramFilter::RejectionHistogramFilter(const TrackerContext& ctx,
                                                   const FilterConfig& cfg)
    : ctx_(ctx),
      cfg_(cfg),
      model_(ctx.rig, ctx.needle, ctx.observation) {
  validate_common(cfg_, 6);
}

StepResult RejectionHistogramFilter::step(const DetectionFrame& frame) {
  const long n = cfg_.n;
  const auto h_ee = HomogeneousTransform::from_pose(frame.ee_pose);
  if (step_index_ == 0) {
    auto collected = rejection_prefilter_collect(
        ctx_.bounds, frame.ee_pose, ctx_.needle, static_cast<std::size_t>(n),
        cfg_.prefilter_max_attempts, cfg_.proposal_box_scale,
        mix_seed(cfg_.seed, kInitStream));
    std::vector<Pose> support = std::move(collected.poses);
    if (support.size() < static_cast<std::size_t>(n)) {
      // Attempt budget ran out; top up from the matched proposal so the
      // filter still carries n support points.
      auto extra = rejection_prefilter_collect(
          ctx_.bounds, frame.ee_pose, ctx_.needle,
          static_cast<std::size_t>(n) - support.size(),
          cfg_.prefilter_max_attempts, 0.0,
          mix_seed(cfg_.seed, kInitStream, 1));
      support.insert(support.end(), extra.poses.begin(), extra.poses.end());
    }
    if (support.size() < static_cast<std::size_t>(n)) {
      throw InvariantError("cHFrj: could not collect support points");
    }

    const auto h_ee_inv = h_ee.inverse();
    support_in_ee_.resize(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
      support_in_ee_[i] =
          compose(h_ee_inv, HomogeneousTransform::from_pose(support[i]))
              .to_pose();
    }
    weights_ = Eigen::VectorXd::Constant(n, 1.0 / n);

    const double pos_var = cfg_.motion_cov_diag.head<3>().mean();
    const double rot_var = cfg_.motion_cov_diag.tail<3>().mean();
    const auto& rel = support_in_ee_;
    kernel_ = DiffusionKernel::build(
        rel.size(),
        [&rel, pos_var, rot_var](std::size_t i, std::size_t j) {
          return pose_sq_mahalanobis(rel[i], rel[j], pos_var, rot_var);
        },
        kKernelTruncationSq);
  } else {
    Eigen::VectorXd diffused;
    kernel_.apply(weights_, diffused, cfg_.exec);
    normalize_weights(diffused);
    weights_ = diffused;
  }

  pose_scratch_.resize(support_in_ee_.size());
  const bool par = cfg_.exec == Exec::parallel;
  const long m = static_cast<long>(support_in_ee_.size());
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < m; ++i) {
    pose_scratch_[static_cast<std::size_t>(i)] =
        compose(h_ee, HomogeneousTransform::from_pose(
                          support_in_ee_[static_cast<std::size_t>(i)]))
            .to_pose();
  }
  const Eigen::VectorXd lls =
      batch_log_likelihoods(model_, pose_scratch_, frame, cfg_.exec);
  apply_log_likelihoods(weights_, lls);
  check_normalized(weights_);

  StepResult result;
  result.n_eff = effective_particles(weights_);
  result.mean_pose = weighted_mean_pose(pose_scratch_, weights_);
  ++step_index_;
  return result;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Tracker> make_tracker(FilterKind kind,
                                      const TrackerContext& ctx,
                                      const FilterConfig& cfg) {
  switch (kind) {
    case FilterKind::pf:
      return std::make_unique<PoseParticleFilter>(ctx, cfg);
    case FilterKind::chfrj:
      return std::make_unique<RejectionHistogramFilter>(ctx, cfg);
    case FilterKind::cpfrj:
      return std::make_unique<RejectionParticleFilter>(ctx, cfg);
    case FilterKind::chfrp:
      return std::make_unique<ReparamHistogramFilter>(ctx, cfg);
    case FilterKind::cpfrp:
      return std::make_unique<ReparamParticleFilter>(ctx, cfg);
  }
  throw std::invalid_argument("unknown filter kind");
}

}  // namespace needletrack
