#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "needletrack/config.hpp"

namespace needletrack {

/// One per-step result row; the raw CSV column order.
struct TrialRow {
  int trial = 0;
  int t = 0;
  std::string filter;
  double err_b_mm = 0.0;
  double err_q_rad = 0.0;
  double n_eff = 0.0;
  bool feasible = false;
  double wall_ms = 0.0;
};

/// Extended per-step record used by tests and the pose/replay outputs.
struct StepTrace {
  int trial = 0;
  int t = 0;
  std::string filter;
  Pose mean_pose;
  std::optional<GraspState> mean_state;
  Pose ee_measured;
  double rel_err_b_mm = 0.0;
  double rel_err_q_rad = 0.0;
};

struct TrialResult {
  std::vector<TrialRow> rows;
  std::vector<StepTrace> traces;
  std::vector<DetectionFrame> frames;  // only when requested
  GraspState gt_final;                 // ground-truth grasp state at the end
  Pose gt_needle_final;                // its needle pose at the last step
};

/// Smooth end-effector pose sequence in the camera frame. Built-in shapes:
/// "static", "line" (constant velocity), "orbit" (circular translation plus
/// slow rotation about the local y-axis).
std::vector<Pose> generate_trajectory(const TrajectorySpec& spec, int steps);

/// Measurement noise on the end-effector pose: position jitter plus a
/// rotation about the local y-axis with angle drawn from
/// N(0, sigma_eo_deg^2).
Pose perturb_ee_pose(const Pose& pose, double sigma_ep_mm,
                     double sigma_eo_deg, std::uint64_t seed);

/// Relative-pose error: compares needle-in-end-effector poses (tracked vs
/// ground truth). Returns (position error mm, rotation error rad).
std::pair<double, double> relative_pose_error(const Pose& tracked_needle,
                                              const Pose& tracked_ee,
                                              const Pose& gt_needle,
                                              const Pose& gt_ee);

struct RunTrialOptions {
  bool keep_traces = true;
  bool keep_frames = false;
};

/// Run one trial: fix a feasible ground-truth grasp state, march the
/// end-effector along the trajectory, synthesize detections, step every
/// configured filter on identical frames, and record errors, feasibility
/// verdicts and wall time. Deterministic given (config seed, trial index);
/// wall_ms is the only nondeterministic column.
TrialResult run_trial(const AppConfig& cfg, int trial_index,
                      const RunTrialOptions& options = {});

/// Run the configured filters over pre-recorded detection frames (no ground
/// truth, so no error columns). Tracker seeding matches run_trial for the
/// same trial index, so replaying a trial's dumped frames reproduces its
/// mean-pose trajectory exactly.
std::vector<StepTrace> replay_frames(const AppConfig& cfg,
                                     const std::vector<DetectionFrame>& frames,
                                     int trial_index);

struct FilterSummary {
  double mean_err_b = 0.0;
  double std_err_b = 0.0;
  double mean_err_q = 0.0;
  double std_err_q = 0.0;
  double feasibility_rate = 0.0;
  double mean_wall_ms = 0.0;
  double mean_n_eff = 0.0;
  double mean_rel_err_b = 0.0;
  double mean_rel_err_q = 0.0;
  long rows = 0;
};

struct BenchmarkEntry {
  std::string label;
  AppConfig cfg;
};

struct BenchmarkResult {
  /// Raw rows per grid entry, in entry order.
  std::vector<std::pair<std::string, std::vector<TrialRow>>> rows;
  /// (label, filter) -> summary.
  std::map<std::string, std::map<std::string, FilterSummary>> summary;
};

BenchmarkResult run_benchmark(const std::vector<BenchmarkEntry>& grid);

FilterSummary summarize(const std::vector<TrialRow>& rows,
                        const std::vector<StepTrace>& traces,
                        const std::string& filter);

/// Raw CSV with a mandatory header and 9-significant-digit floats.
std::string trial_rows_to_csv(const std::vector<TrialRow>& rows);

/// Per-step mean poses and relative poses (needle in the measured
/// end-effector frame); full double precision. Shared by the trial and
/// replay outputs.
std::string traces_to_pose_csv(const std::vector<StepTrace>& traces);

std::string summary_to_json(const BenchmarkResult& result);

/// Fig-style aggregate: one row per (noise level, filter).
std::string plot_data_csv(const BenchmarkResult& result,
                          const std::map<std::string, double>& label_noise);

/// Write via a ".partial" sibling then rename, so a completed path is
/// always a complete file. Throws IoError.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace needletrack
