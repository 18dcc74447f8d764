#include <doctest.h>

#include <Eigen/Dense>
#include <numbers>

#include "helpers.hpp"
#include "needletrack/filters.hpp"

using namespace needletrack;
namespace tu = testutil;

namespace {
constexpr double kPi = std::numbers::pi;

TrackerContext make_context() {
  TrackerContext ctx;
  ctx.bounds = GraspBounds::defaults();
  ctx.needle = NeedleSpec{};
  ctx.rig = StereoRig::make(256, 256, 128, 128, 256, 256, 5.0);
  ctx.observation = ObservationParams{};
  return ctx;
}

FilterConfig reparam_config(int n, std::uint64_t seed) {
  FilterConfig cfg;
  cfg.n = n;
  cfg.motion_cov_diag =
      (Eigen::Vector4d() << 4e-4, 0.25, 2.5e-5, 1e-4).finished();
  cfg.seed = seed;
  return cfg;
}

FilterConfig pose_config(int n, std::uint64_t seed) {
  FilterConfig cfg;
  cfg.n = n;
  cfg.motion_cov_diag.resize(6);
  cfg.motion_cov_diag << 0.25, 0.25, 0.25, 3.05e-4, 3.05e-4, 3.05e-4;
  cfg.seed = seed;
  return cfg;
}

Pose ee_at_depth() {
  Pose p;
  p.b = Eigen::Vector3d(0, 0, 100);
  return p;
}

DetectionFrame frame_for(const TrackerContext& ctx, const GraspState& gt,
                         const Pose& ee, int t, double sigma_n,
                         std::uint64_t seed) {
  const Pose needle_pose = state_to_pose(gt, ee, ctx.needle, ctx.bounds);
  auto frame =
      generate_detections(needle_pose, ctx.rig, ctx.needle, 5, sigma_n, seed);
  frame.t = t;
  frame.ee_pose = ee;
  return frame;
}

DetectionFrame empty_frame(const Pose& ee, int t) {
  DetectionFrame frame;
  frame.t = t;
  frame.ee_pose = ee;
  return frame;
}
}  // namespace

TEST_SUITE_BEGIN("filters");

TEST_CASE("effective_particles closed forms") {
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(8, 1.0 / 8.0);
  CHECK(effective_particles(uniform) == doctest::Approx(8.0).epsilon(1e-12));

  Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(5);
  one_hot[2] = 1.0;
  CHECK(effective_particles(one_hot) == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::VectorXd half(4);
  half << 0.5, 0.5, 0.0, 0.0;
  CHECK(effective_particles(half) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("stratified_resample uniform weights keep every particle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    WeightedEnsemble<int> ens;
    ens.states = {0, 1, 2, 3, 4, 5, 6};
    ens.weights = Eigen::VectorXd::Constant(7, 1.0 / 7.0);
    stratified_resample(ens, seed);
    std::vector<int> sorted = ens.states;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
    CHECK(ens.weights.isConstant(1.0 / 7.0));
  }
}

TEST_CASE("stratified_resample degenerate weight takes all slots") {
  WeightedEnsemble<int> ens;
  ens.states = {10, 11, 12, 13};
  ens.weights = Eigen::VectorXd::Zero(4);
  ens.weights[0] = 1.0;
  stratified_resample(ens, 3);
  CHECK(ens.states == std::vector<int>{10, 10, 10, 10});
}

TEST_CASE("stratified_resample copy counts match n*w (Monte Carlo)") {
  const int n = 5;
  Eigen::VectorXd weights(n);
  weights << 0.35, 0.25, 0.2, 0.15, 0.05;
  const int runs = 10000;

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(runs, n);
  for (int r = 0; r < runs; ++r) {
    WeightedEnsemble<int> ens;
    ens.states = {0, 1, 2, 3, 4};
    ens.weights = weights;
    stratified_resample(ens, 1000 + static_cast<std::uint64_t>(r));
    for (int s : ens.states) counts(r, s) += 1.0;
  }
  for (int i = 0; i < n; ++i) {
    const double mean = counts.col(i).mean();
    const double var =
        (counts.col(i).array() - mean).square().sum() / (runs - 1);
    const double se = std::sqrt(var / runs) + 1e-12;
    CHECK(std::abs(mean - n * weights[i]) <= 3.0 * se + 1e-9);
  }
}

TEST_CASE("diffusion kernel agrees with the dense serial reference") {
  const GraspBounds bounds = GraspBounds::defaults();
  const auto support = sample_feasible(bounds, 150, 31);
  const Eigen::Vector4d variances(0.05, 30.0, 0.01, 0.02);
  const auto maha = [&](std::size_t i, std::size_t j) {
    return diag_sq_mahalanobis(support[i].to_vec(), support[j].to_vec(),
                               variances);
  };
  SplitMix64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd weights(150);
  for (int i = 0; i < 150; ++i) weights[i] = unit(rng);
  weights /= weights.sum();

  const Eigen::VectorXd dense = diffusion_reference(150, maha, weights);

  // Untruncated sparse kernel is exact.
  const auto exact = DiffusionKernel::build(150, maha, 1e18);
  Eigen::VectorXd out;
  exact.apply(weights, out, Exec::serial);
  CHECK(((out - dense).cwiseAbs().array() / dense.array()).maxCoeff() <
        1e-12);

  // Default truncation drops only far-tail mass.
  const auto truncated = DiffusionKernel::build(150, maha);
  truncated.apply(weights, out, Exec::parallel);
  CHECK(((out - dense).cwiseAbs().array() / dense.array()).maxCoeff() < 1e-4);

  // Serial and parallel policies are bit-identical.
  Eigen::VectorXd out_serial;
  truncated.apply(weights, out_serial, Exec::serial);
  CHECK((out - out_serial).cwiseAbs().maxCoeff() == 0.0);

  // Diffusion preserves total probability mass.
  CHECK(out.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("diffusion kernel: delta limit and vertex-transitive support") {
  // Zero variances: the kernel collapses to the identity.
  const GraspBounds bounds = GraspBounds::defaults();
  const auto support = sample_feasible(bounds, 40, 5);
  const Eigen::Vector4d zero = Eigen::Vector4d::Zero();
  const auto delta = DiffusionKernel::build(40, [&](std::size_t i,
                                                    std::size_t j) {
    return diag_sq_mahalanobis(support[i].to_vec(), support[j].to_vec(), zero);
  });
  SplitMix64 rng(23);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd weights(40);
  for (int i = 0; i < 40; ++i) weights[i] = unit(rng);
  weights /= weights.sum();
  Eigen::VectorXd out;
  delta.apply(weights, out, Exec::serial);
  CHECK((out - weights).cwiseAbs().maxCoeff() < 1e-6);

  // Hypercube-corner support: every point equivalent, uniform stays uniform.
  std::vector<Eigen::Vector4d> corners;
  for (int mask = 0; mask < 16; ++mask) {
    corners.emplace_back(mask & 1 ? 1.0 : -1.0, mask & 2 ? 1.0 : -1.0,
                         mask & 4 ? 1.0 : -1.0, mask & 8 ? 1.0 : -1.0);
  }
  const Eigen::Vector4d wide = Eigen::Vector4d::Constant(4.0);
  const auto cube = DiffusionKernel::build(16, [&](std::size_t i,
                                                   std::size_t j) {
    return diag_sq_mahalanobis(corners[i], corners[j], wide);
  });
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(16, 1.0 / 16.0);
  cube.apply(uniform, out, Exec::serial);
  CHECK((out - uniform).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("cPFrp: a single particle with zero motion noise is returned") {
  TrackerContext ctx = make_context();
  FilterConfig cfg = reparam_config(1, 99);
  cfg.motion_cov_diag.setZero();
  ReparamParticleFilter filter(ctx, cfg);

  const Pose ee = ee_at_depth();
  GraspState particle;
  for (int t = 0; t < 5; ++t) {
    const auto result = filter.step(empty_frame(ee, t));
    REQUIRE(result.mean_state.has_value());
    if (t == 0) {
      particle = filter.ensemble().states[0];
    }
    CHECK((result.mean_state->to_vec() - particle.to_vec())
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(result.n_eff == doctest::Approx(1.0));
  }
}

TEST_CASE("cPFrp: determinism and serial/parallel bit-equality") {
  TrackerContext ctx = make_context();
  SplitMix64 rng(40);
  const GraspState gt = tu::random_feasible_state(ctx.bounds, rng);
  const Pose ee = ee_at_depth();

  std::vector<DetectionFrame> frames;
  for (int t = 0; t < 5; ++t) {
    frames.push_back(frame_for(ctx, gt, ee, t, 2.0, 7000 + t));
  }

  FilterConfig cfg = reparam_config(200, 4242);
  ReparamParticleFilter a(ctx, cfg);
  ReparamParticleFilter b(ctx, cfg);
  FilterConfig serial_cfg = cfg;
  serial_cfg.exec = Exec::serial;
  ReparamParticleFilter c(ctx, serial_cfg);

  for (const auto& frame : frames) {
    const auto ra = a.step(frame);
    const auto rb = b.step(frame);
    const auto rc = c.step(frame);
    CHECK((a.weights() - b.weights()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.weights() - c.weights()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ra.mean_pose.b - rb.mean_pose.b).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ra.mean_pose.b - rc.mean_pose.b).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ra.n_eff == rc.n_eff);
  }
}

TEST_CASE("cPFrp/cHFrp: everything emitted is feasible at high noise") {
  TrackerContext ctx = make_context();
  SplitMix64 rng(41);
  const GraspState gt = tu::random_feasible_state(ctx.bounds, rng);
  const FeasibilityOracle oracle(ctx.bounds, ctx.needle);

  ReparamParticleFilter pf(ctx, reparam_config(300, 11));
  ReparamHistogramFilter hf(ctx, reparam_config(300, 12));

  for (int t = 0; t < 20; ++t) {
    Pose ee = ee_at_depth();
    ee.b.x() += 0.5 * t;  // moving gripper
    const auto frame = frame_for(ctx, gt, ee, t, 5.0, 9000 + t);

    for (Tracker* tracker : {static_cast<Tracker*>(&pf),
                             static_cast<Tracker*>(&hf)}) {
      const auto result = tracker->step(frame);
      REQUIRE(result.mean_state.has_value());
      CHECK(is_feasible(*result.mean_state, ctx.bounds));
      CHECK(oracle.pass(result.mean_pose, frame.ee_pose));
      CHECK(std::abs(tracker->weight_sum() - 1.0) < 1e-9);
    }
    for (const auto& s : pf.ensemble().states) {
      CHECK(is_feasible(s, ctx.bounds));
    }
  }
}

TEST_CASE("cHFrp: support immutable, zero-noise predict is identity") {
  TrackerContext ctx = make_context();
  SplitMix64 rng(42);
  const GraspState gt = tu::random_feasible_state(ctx.bounds, rng);
  const Pose ee = ee_at_depth();

  FilterConfig cfg = reparam_config(100, 77);
  cfg.motion_cov_diag.setZero();  // delta kernel
  ReparamHistogramFilter hf(ctx, cfg);

  hf.step(frame_for(ctx, gt, ee, 0, 1.0, 1));  // weights become non-uniform
  const auto support_before = hf.ensemble().states;
  const Eigen::VectorXd weights_before = hf.ensemble().weights;
  CHECK(effective_particles(weights_before) < 100.0);

  // Empty frame: update is a no-op, so the step is pure predict.
  hf.step(empty_frame(ee, 1));
  CHECK((hf.ensemble().weights - weights_before).cwiseAbs().maxCoeff() <
        1e-6);

  hf.step(frame_for(ctx, gt, ee, 2, 1.0, 2));
  const auto& support_after = hf.ensemble().states;
  for (std::size_t i = 0; i < support_before.size(); ++i) {
    CHECK((support_after[i].to_vec() - support_before[i].to_vec())
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("PF: pure rigid transport tracks exactly with zero noise") {
  TrackerContext ctx = make_context();
  FilterConfig cfg = pose_config(1, 5);
  cfg.motion_cov_diag.setZero();
  PoseParticleFilter pf(ctx, cfg);

  // Let the filter pick its particle, then feed frames generated from that
  // particle transported with the gripper.
  Pose ee0 = ee_at_depth();
  pf.step(empty_frame(ee0, 0));
  const Pose gt0 = pf.ensemble().states[0];

  Pose prev_ee = ee0;
  HomogeneousTransform gt = HomogeneousTransform::from_pose(gt0);
  for (int t = 1; t < 10; ++t) {
    Pose ee = ee0;
    ee.b += Eigen::Vector3d(0.8 * t, -0.3 * t, 0.5 * t);
    ee.q = Eigen::Vector3d(0.0, 0.01 * t, 0.0);
    const auto delta = compose(HomogeneousTransform::from_pose(ee),
                               HomogeneousTransform::from_pose(prev_ee)
                                   .inverse());
    gt = compose(delta, gt);
    prev_ee = ee;

    auto frame = generate_detections(gt.to_pose(), ctx.rig, ctx.needle, 5,
                                     0.0, 100 + t);
    frame.t = t;
    frame.ee_pose = ee;
    const auto result = pf.step(frame);
    CHECK(position_error(result.mean_pose.b, gt.t) < 1e-9);
    CHECK(rotation_error(result.mean_pose.q, gt.to_pose().q) < 1e-9);
  }
}

TEST_CASE("cPFrj: zero motion noise consumes no redraws") {
  TrackerContext ctx = make_context();
  FilterConfig cfg = pose_config(50, 6);
  cfg.motion_cov_diag.setZero();
  cfg.proposal_box_scale = 0.0;  // matched proposal for a quick init
  RejectionParticleFilter pf(ctx, cfg);

  SplitMix64 rng(51);
  const GraspState gt = tu::random_feasible_state(ctx.bounds, rng);
  Pose ee = ee_at_depth();
  pf.step(frame_for(ctx, gt, ee, 0, 1.0, 1));
  for (int t = 1; t < 4; ++t) {
    ee.b.x() += 1.0;
    pf.step(frame_for(ctx, gt, ee, t, 1.0, 1 + t));
    CHECK(pf.last_step_redraws() == 0);
  }
}

TEST_CASE("cPFrj: emitted particles are feasible or zero-weighted") {
  TrackerContext ctx = make_context();
  FilterConfig cfg = pose_config(150, 8);
  cfg.motion_cov_diag << 0.0625, 0.0625, 0.0625, 1e-4, 1e-4, 1e-4;
  cfg.proposal_box_scale = 0.0;
  cfg.retry_limit = 50;
  RejectionParticleFilter pf(ctx, cfg);
  const FeasibilityOracle oracle(ctx.bounds, ctx.needle);

  SplitMix64 rng(52);
  const GraspState gt = tu::random_feasible_state(ctx.bounds, rng);
  Pose ee = ee_at_depth();
  pf.step(frame_for(ctx, gt, ee, 0, 2.0, 61));
  for (int t = 1; t < 4; ++t) {
    ee.b.y() += 0.7;
    const auto frame = frame_for(ctx, gt, ee, t, 2.0, 61 + t);
    pf.step(frame);
    CHECK(pf.last_step_redraws() > 0);
    for (std::size_t i = 0; i < pf.ensemble().states.size(); ++i) {
      const bool ok = oracle.pass(pf.ensemble().states[i], frame.ee_pose) ||
                      pf.weights()[static_cast<long>(i)] == 0.0;
      CHECK(ok);
    }
  }
}

TEST_CASE("cHFrj: rigid support, constant kernel, working update") {
  TrackerContext ctx = make_context();
  FilterConfig cfg = pose_config(120, 17);
  cfg.proposal_box_scale = 0.0;  // matched proposal keeps init cheap
  RejectionHistogramFilter hf(ctx, cfg);

  SplitMix64 rng(53);
  const GraspState gt = tu::random_feasible_state(ctx.bounds, rng);
  Pose ee = ee_at_depth();
  hf.step(frame_for(ctx, gt, ee, 0, 2.0, 71));
  const auto support_before = hf.support_in_ee();

  double prev_best = -1.0;
  for (int t = 1; t < 5; ++t) {
    ee.b.x() += 0.8;
    ee.q = Eigen::Vector3d(0, 0.01 * t, 0);
    const auto result = hf.step(frame_for(ctx, gt, ee, t, 2.0, 71 + t));
    CHECK(std::abs(hf.weight_sum() - 1.0) < 1e-9);
    CHECK(result.n_eff >= 1.0);
    CHECK(std::isfinite(result.mean_pose.b.norm()));
    prev_best = result.n_eff;
  }
  CHECK(prev_best >= 1.0);
  // Support stays bitwise identical in the end-effector frame.
  const auto& support_after = hf.support_in_ee();
  for (std::size_t i = 0; i < support_before.size(); ++i) {
    CHECK((support_after[i].b - support_before[i].b).norm() == 0.0);
    CHECK((support_after[i].q - support_before[i].q).norm() == 0.0);
  }
}

TEST_CASE("rejection_prefilter: matched proposal accepts nearly everything") {
  TrackerContext ctx = make_context();
  const auto result = rejection_prefilter_collect(
      ctx.bounds, ee_at_depth(), ctx.needle, 500, 100000, 0.0, 314);
  REQUIRE(result.poses.size() == 500);
  CHECK(result.acceptance_rate() >= 0.99);

  const FeasibilityOracle oracle(ctx.bounds, ctx.needle);
  for (const auto& pose : result.poses) {
    CHECK(oracle.pass(pose, ee_at_depth()));
  }
}

TEST_CASE("rejection_prefilter: 10x box accepts below 1%") {
  TrackerContext ctx = make_context();
  const auto result = rejection_prefilter_collect(
      ctx.bounds, ee_at_depth(), ctx.needle, 1000, 300000, 10.0, 99);
  CHECK(result.attempts == 300000);
  CHECK(result.acceptance_rate() < 0.01);

  const FeasibilityOracle oracle(ctx.bounds, ctx.needle);
  for (const auto& pose : result.poses) {
    CHECK(oracle.pass(pose, ee_at_depth()));
  }
}

TEST_CASE("rejection_prefilter: shortfall throws with the partial set") {
  TrackerContext ctx = make_context();
  try {
    rejection_prefilter(ctx.bounds, ee_at_depth(), ctx.needle, 1000, 5000,
                        10.0, 1);
    FAIL("expected InsufficientSamplesError");
  } catch (const InsufficientSamplesError& e) {
    CHECK(e.partial.poses.size() < 1000);
    CHECK(e.partial.attempts == 5000);
  }
}

TEST_CASE("weighted_mean_pose: identical poses and symmetric rotations") {
  SplitMix64 rng(60);
  const Pose p = tu::random_pose(rng);
  Eigen::VectorXd w2 = Eigen::VectorXd::Constant(2, 0.5);
  const Pose same = weighted_mean_pose({p, p}, w2);
  CHECK(position_error(same.b, p.b) < 1e-12);
  CHECK(rotation_error(same.q, p.q) < 1e-9);

  // Two rotations about the same axis average to the mid-angle.
  Pose a, b;
  a.q = Eigen::Vector3d(0, 0, 0.4);
  b.q = Eigen::Vector3d(0, 0, 1.0);
  const Pose mid = weighted_mean_pose({a, b}, w2);
  CHECK(rotation_error(mid.q, Eigen::Vector3d(0, 0, 0.7)) < 1e-9);
}

TEST_CASE("feasibility oracle accepts manifold poses, rejects far ones") {
  TrackerContext ctx = make_context();
  const FeasibilityOracle oracle(ctx.bounds, ctx.needle);
  SplitMix64 rng(61);
  for (int i = 0; i < 100; ++i) {
    const GraspState s = tu::random_feasible_state(ctx.bounds, rng);
    const Pose ee = tu::random_ee_pose_in_view(rng);
    const Pose pose = state_to_pose(s, ee, ctx.needle, ctx.bounds);
    CHECK(oracle.pass(pose, ee));

    Pose far = pose;
    far.b += Eigen::Vector3d(50, 0, 0);
    CHECK_FALSE(oracle.pass(far, ee));
  }
}

TEST_CASE("make_tracker: names, construction validation") {
  TrackerContext ctx = make_context();
  CHECK(filter_kind_from_name("cPFrp") == FilterKind::cpfrp);
  CHECK_THROWS_AS(filter_kind_from_name("nope"), std::invalid_argument);

  FilterConfig bad = reparam_config(100, 1);
  bad.n_eff_threshold = 500.0;  // above n
  CHECK_THROWS_AS(ReparamParticleFilter(ctx, bad), std::invalid_argument);

  FilterConfig wrong_cov = pose_config(10, 1);
  CHECK_THROWS_AS(ReparamParticleFilter(ctx, wrong_cov),
                  std::invalid_argument);

  for (const char* name : {"PF", "cHFrj", "cPFrj", "cHFrp", "cPFrp"}) {
    const FilterKind kind = filter_kind_from_name(name);
    CHECK(filter_name(kind) == name);
  }
}

TEST_SUITE_END();
