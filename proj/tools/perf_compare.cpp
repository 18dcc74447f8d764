// Timing comparison of the data-parallel kernels against their serial
// reference paths: batch likelihood evaluation, grasp-state prediction, and
// the histogram-filter diffusion (sparse truncated vs dense reference).

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "needletrack/config.hpp"
#include "needletrack/filters.hpp"
#include "needletrack/harness.hpp"

namespace nt = needletrack;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

struct Timing {
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
};

void report(const std::string& name, const Timing& t) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %.2fx\n",
              name.c_str(), t.serial_ms, t.parallel_ms,
              t.parallel_ms > 0.0 ? t.serial_ms / t.parallel_ms : 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  int n = 2000;
  int repeats = 20;
  int hf_n = 800;
  CLI::App app{"needletrack kernel timing: serial reference vs OpenMP"};
  app.add_option("--n", n, "ensemble size for likelihood/predict kernels");
  app.add_option("--repeats", repeats, "timed repetitions");
  app.add_option("--hf-n", hf_n, "support size for the diffusion kernels");
  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: unavailable (serial build)\n");
#endif

  const nt::AppConfig cfg = nt::config_from_json(nt::default_config_json());
  const auto traj = nt::generate_trajectory(cfg.experiment.trajectory, 2);
  const nt::GraspState gt =
      nt::sample_feasible(cfg.bounds, 1, 42)[0];
  const nt::Pose needle_pose =
      nt::state_to_pose(gt, traj[0], cfg.needle, cfg.bounds);
  nt::DetectionFrame frame = nt::generate_detections(
      needle_pose, cfg.rig, cfg.needle, 5, 2.0, 7);
  frame.ee_pose = traj[0];

  const auto states =
      nt::sample_feasible(cfg.bounds, static_cast<std::size_t>(n), 11);
  std::vector<nt::Pose> poses(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    poses[i] = nt::state_to_pose(states[i], traj[0], cfg.needle, cfg.bounds);
  }
  const nt::LikelihoodModel model(cfg.rig, cfg.needle, cfg.observation);

  {
    Timing t;
    Eigen::VectorXd sink;
    for (int pass = 0; pass < 2; ++pass) {
      const nt::Exec exec = pass == 0 ? nt::Exec::serial : nt::Exec::parallel;
      sink = nt::batch_log_likelihoods(model, poses, frame, exec);  // warm up
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < repeats; ++r) {
        sink = nt::batch_log_likelihoods(model, poses, frame, exec);
      }
      (pass == 0 ? t.serial_ms : t.parallel_ms) = ms_since(t0) / repeats;
    }
    report("batch log-likelihood", t);
  }

  {
    // Diffusion: sparse truncated kernel (both policies) vs the dense
    // serial reference.
    const auto support = nt::sample_feasible(
        cfg.bounds, static_cast<std::size_t>(hf_n), 13);
    // Wide kernel so the sparse structure actually carries neighbors.
    const Eigen::Vector4d variances(0.05, 20.0, 0.005, 0.01);
    const auto maha = [&](std::size_t i, std::size_t j) {
      return nt::diag_sq_mahalanobis(support[i].to_vec(), support[j].to_vec(),
                                     variances);
    };
    const auto kernel = nt::DiffusionKernel::build(support.size(), maha);
    Eigen::VectorXd weights =
        Eigen::VectorXd::Constant(hf_n, 1.0 / static_cast<double>(hf_n));

    Timing t;
    Eigen::VectorXd out;
    {
      const auto t0 = std::chrono::steady_clock::now();
      Eigen::VectorXd ref;
      ref = nt::diffusion_reference(support.size(), maha, weights);
      t.serial_ms = ms_since(t0);
      out = ref;
    }
    {
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < repeats; ++r) {
        kernel.apply(weights, out, nt::Exec::parallel);
      }
      t.parallel_ms = ms_since(t0) / repeats;
    }
    std::printf("diffusion: %zu of %d^2 kernel entries kept\n",
                kernel.stored_entries(), hf_n);
    report("hf diffusion (dense ref)", t);

    Timing t2;
    for (int pass = 0; pass < 2; ++pass) {
      const nt::Exec exec = pass == 0 ? nt::Exec::serial : nt::Exec::parallel;
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < repeats; ++r) kernel.apply(weights, out, exec);
      (pass == 0 ? t2.serial_ms : t2.parallel_ms) = ms_since(t0) / repeats;
    }
    report("hf diffusion (sparse)", t2);
  }

  {
    // Full filter steps at the configured ensemble size.
    nt::TrackerContext ctx{cfg.bounds, cfg.needle, cfg.rig, cfg.observation};
    Timing t;
    for (int pass = 0; pass < 2; ++pass) {
      nt::FilterConfig fc;
      fc.n = n;
      fc.motion_cov_diag =
          (Eigen::Vector4d() << 4e-4, 0.25, 2.5e-5, 1e-4).finished();
      fc.seed = 99;
      fc.exec = pass == 0 ? nt::Exec::serial : nt::Exec::parallel;
      nt::ReparamParticleFilter filter(ctx, fc);
      filter.step(frame);  // init
      filter.step(frame);  // warm up
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < repeats; ++r) filter.step(frame);
      (pass == 0 ? t.serial_ms : t.parallel_ms) = ms_since(t0) / repeats;
    }
    report("cPFrp full step", t);
  }

  return 0;
}
