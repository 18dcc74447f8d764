#include "needletrack/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "needletrack/errors.hpp"
#include "needletrack/rng.hpp"

namespace needletrack {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Trial-level stream tags.
constexpr std::uint64_t kGtStream = 11;
constexpr std::uint64_t kDetectionStream = 12;
constexpr std::uint64_t kEeNoiseStream = 13;
constexpr std::uint64_t kFilterStream = 14;
constexpr std::uint64_t kDriftStream = 15;

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<Pose> generate_trajectory(const TrajectorySpec& spec, int steps) {
  if (steps < 1) {
    throw std::invalid_argument("generate_trajectory: steps must be >= 1");
  }
  Pose start;
  start.b = spec.start_position_mm;
  start.q = canonicalize_axis_angle(spec.start_axis_angle);

  std::vector<Pose> out;
  out.reserve(static_cast<std::size_t>(steps));
  if (spec.name == "static") {
    out.assign(static_cast<std::size_t>(steps), start);
    return out;
  }
  if (spec.name == "line") {
    for (int t = 0; t < steps; ++t) {
      Pose p = start;
      p.b += static_cast<double>(t) * spec.velocity_mm_per_step;
      out.push_back(p);
    }
    return out;
  }
  if (spec.name == "orbit") {
    const auto r0 = axis_angle_to_matrix(start.q);
    const double omega = spec.orbit_deg_per_step * kDegToRad;
    const double rot_rate = spec.rotation_deg_per_step * kDegToRad;
    for (int t = 0; t < steps; ++t) {
      const double a = omega * static_cast<double>(t);
      Pose p;
      p.b = start.b + spec.orbit_radius_mm *
                          Eigen::Vector3d(std::cos(a) - 1.0, std::sin(a), 0.0);
      const Eigen::Matrix3d local_spin = axis_angle_to_matrix(
          Eigen::Vector3d(0.0, rot_rate * static_cast<double>(t), 0.0));
      p.q = matrix_to_axis_angle(r0 * local_spin);
      out.push_back(p);
    }
    return out;
  }
  throw ConfigError("generate_trajectory: unknown spec '" + spec.name + "'");
}

Pose perturb_ee_pose(const Pose& pose, double sigma_ep_mm,
                     double sigma_eo_deg, std::uint64_t seed) {
  if (sigma_ep_mm < 0.0 || sigma_eo_deg < 0.0) {
    throw std::invalid_argument("perturb_ee_pose: sigmas must be >= 0");
  }
  SplitMix64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Pose out = pose;
  if (sigma_ep_mm > 0.0) {
    for (int k = 0; k < 3; ++k) out.b[k] += sigma_ep_mm * normal(rng);
  }
  if (sigma_eo_deg > 0.0) {
    const double angle = sigma_eo_deg * kDegToRad * normal(rng);
    const Eigen::Matrix3d spin =
        axis_angle_to_matrix(Eigen::Vector3d(0.0, angle, 0.0));
    out.q = matrix_to_axis_angle(axis_angle_to_matrix(pose.q) * spin);
  }
  return out;
}

std::pair<double, double> relative_pose_error(const Pose& tracked_needle,
                                              const Pose& tracked_ee,
                                              const Pose& gt_needle,
                                              const Pose& gt_ee) {
  const auto invert = [](const Pose& p) {
    return HomogeneousTransform::from_pose(p).inverse().to_pose();
  };
  // needle-in-ee = inverse of (ee-in-needle)
  const Pose tracked_rel = invert(relative_ee_in_needle(tracked_needle,
                                                        tracked_ee));
  const Pose gt_rel = invert(relative_ee_in_needle(gt_needle, gt_ee));
  return {position_error(tracked_rel.b, gt_rel.b),
          rotation_error(tracked_rel.q, gt_rel.q)};
}

namespace {

std::vector<std::unique_ptr<Tracker>> make_trial_trackers(
    const AppConfig& cfg, std::uint64_t trial_seed) {
  TrackerContext ctx{cfg.bounds, cfg.needle, cfg.rig, cfg.observation};
  std::vector<std::unique_ptr<Tracker>> trackers;
  for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
    FilterConfig fc = cfg.filters[f].cfg;
    fc.seed = mix_seed(trial_seed, kFilterStream, f);
    trackers.push_back(
        make_tracker(filter_kind_from_name(cfg.filters[f].name), ctx, fc));
  }
  return trackers;
}

}  // namespace

TrialResult run_trial(const AppConfig& cfg, int trial_index,
                      const RunTrialOptions& options) {
  const auto& exp = cfg.experiment;
  const std::uint64_t trial_seed =
      mix_seed(exp.seed, static_cast<std::uint64_t>(trial_index));

  GraspState gt_state =
      sample_feasible(cfg.bounds, 1, mix_seed(trial_seed, kGtStream))[0];
  const auto trajectory = generate_trajectory(exp.trajectory, exp.steps);
  const bool drifting = (exp.drift_cov_diag.array() > 0.0).any();
  const Eigen::Vector4d drift_stds = exp.drift_cov_diag.cwiseSqrt();

  const FeasibilityOracle oracle(cfg.bounds, cfg.needle);
  auto trackers = make_trial_trackers(cfg, trial_seed);

  TrialResult result;
  result.rows.reserve(static_cast<std::size_t>(exp.steps) * trackers.size());

  for (int t = 0; t < exp.steps; ++t) {
    const Pose& ee_true = trajectory[static_cast<std::size_t>(t)];
    if (drifting && t > 0) {
      SplitMix64 rng(mix_seed(trial_seed, kDriftStream,
                              static_cast<std::uint64_t>(t)));
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::Vector4d noise;
      for (int k = 0; k < 4; ++k) noise[k] = drift_stds[k] * normal(rng);
      gt_state = clip_motion(gt_state, Eigen::Vector4d::Zero(), noise,
                             cfg.bounds);
    }
    const Pose needle_true =
        state_to_pose(gt_state, ee_true, cfg.needle, cfg.bounds);

    DetectionFrame frame = generate_detections(
        needle_true, cfg.rig, cfg.needle,
        static_cast<std::size_t>(exp.detections_per_image), exp.sigma_n_px,
        mix_seed(trial_seed, kDetectionStream, static_cast<std::uint64_t>(t)));
    frame.t = t;
    frame.ee_pose = perturb_ee_pose(
        ee_true, exp.sigma_ep_mm, exp.sigma_eo_deg,
        mix_seed(trial_seed, kEeNoiseStream, static_cast<std::uint64_t>(t)));

    for (std::size_t f = 0; f < trackers.size(); ++f) {
      const auto t0 = std::chrono::steady_clock::now();
      const StepResult step = trackers[f]->step(frame);
      const auto t1 = std::chrono::steady_clock::now();

      TrialRow row;
      row.trial = trial_index;
      row.t = t;
      row.filter = cfg.filters[f].name;
      row.err_b_mm = position_error(step.mean_pose.b, needle_true.b);
      row.err_q_rad = rotation_error(step.mean_pose.q, needle_true.q);
      row.n_eff = step.n_eff;
      row.feasible = oracle.pass(step.mean_pose, frame.ee_pose);
      row.wall_ms =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
      result.rows.push_back(row);

      if (options.keep_traces) {
        const auto [rel_b, rel_q] = relative_pose_error(
            step.mean_pose, frame.ee_pose, needle_true, ee_true);
        result.traces.push_back(StepTrace{trial_index, t, cfg.filters[f].name,
                                          step.mean_pose, step.mean_state,
                                          frame.ee_pose, rel_b, rel_q});
      }
    }
    if (options.keep_frames) result.frames.push_back(frame);
    if (t == exp.steps - 1) {
      result.gt_final = gt_state;
      result.gt_needle_final = needle_true;
    }
  }
  return result;
}

std::vector<StepTrace> replay_frames(const AppConfig& cfg,
                                     const std::vector<DetectionFrame>& frames,
                                     int trial_index) {
  if (frames.empty()) {
    throw DataError("replay: no frames");
  }
  const std::uint64_t trial_seed =
      mix_seed(cfg.experiment.seed, static_cast<std::uint64_t>(trial_index));
  auto trackers = make_trial_trackers(cfg, trial_seed);

  std::vector<StepTrace> traces;
  traces.reserve(frames.size() * trackers.size());
  for (const auto& frame : frames) {
    for (std::size_t f = 0; f < trackers.size(); ++f) {
      const StepResult step = trackers[f]->step(frame);
      traces.push_back(StepTrace{trial_index, frame.t, cfg.filters[f].name,
                                 step.mean_pose, step.mean_state,
                                 frame.ee_pose, 0.0, 0.0});
    }
  }
  return traces;
}

FilterSummary summarize(const std::vector<TrialRow>& rows,
                        const std::vector<StepTrace>& traces,
                        const std::string& filter) {
  FilterSummary s;
  double sum_b = 0.0, sum_b2 = 0.0, sum_q = 0.0, sum_q2 = 0.0;
  double sum_wall = 0.0, sum_neff = 0.0;
  long feasible = 0;
  for (const auto& row : rows) {
    if (row.filter != filter) continue;
    ++s.rows;
    sum_b += row.err_b_mm;
    sum_b2 += row.err_b_mm * row.err_b_mm;
    sum_q += row.err_q_rad;
    sum_q2 += row.err_q_rad * row.err_q_rad;
    sum_wall += row.wall_ms;
    sum_neff += row.n_eff;
    if (row.feasible) ++feasible;
  }
  if (s.rows == 0) return s;
  const double n = static_cast<double>(s.rows);
  s.mean_err_b = sum_b / n;
  s.mean_err_q = sum_q / n;
  s.std_err_b = std::sqrt(std::max(0.0, sum_b2 / n - s.mean_err_b * s.mean_err_b));
  s.std_err_q = std::sqrt(std::max(0.0, sum_q2 / n - s.mean_err_q * s.mean_err_q));
  s.feasibility_rate = static_cast<double>(feasible) / n;
  s.mean_wall_ms = sum_wall / n;
  s.mean_n_eff = sum_neff / n;

  double sum_rb = 0.0, sum_rq = 0.0;
  long trace_rows = 0;
  for (const auto& trace : traces) {
    if (trace.filter != filter) continue;
    ++trace_rows;
    sum_rb += trace.rel_err_b_mm;
    sum_rq += trace.rel_err_q_rad;
  }
  if (trace_rows > 0) {
    s.mean_rel_err_b = sum_rb / static_cast<double>(trace_rows);
    s.mean_rel_err_q = sum_rq / static_cast<double>(trace_rows);
  }
  return s;
}

BenchmarkResult run_benchmark(const std::vector<BenchmarkEntry>& grid) {
  if (grid.empty()) {
    throw std::invalid_argument("run_benchmark: empty grid");
  }
  BenchmarkResult result;
  for (const auto& entry : grid) {
    std::vector<TrialRow> rows;
    std::vector<StepTrace> traces;
    for (int trial = 0; trial < entry.cfg.experiment.trials; ++trial) {
      TrialResult tr = run_trial(entry.cfg, trial);
      rows.insert(rows.end(), tr.rows.begin(), tr.rows.end());
      traces.insert(traces.end(), tr.traces.begin(), tr.traces.end());
    }
    auto& per_filter = result.summary[entry.label];
    for (const auto& f : entry.cfg.filters) {
      per_filter[f.name] = summarize(rows, traces, f.name);
    }
    result.rows.emplace_back(entry.label, std::move(rows));
  }
  return result;
}

std::string trial_rows_to_csv(const std::vector<TrialRow>& rows) {
  std::ostringstream out;
  out << "trial,t,filter,err_b_mm,err_q_rad,n_eff,feasible,wall_ms\n";
  for (const auto& r : rows) {
    out << r.trial << ',' << r.t << ',' << r.filter << ',' << fmt9(r.err_b_mm)
        << ',' << fmt9(r.err_q_rad) << ',' << fmt9(r.n_eff) << ','
        << (r.feasible ? 1 : 0) << ',' << fmt9(r.wall_ms) << '\n';
  }
  return out.str();
}

std::string traces_to_pose_csv(const std::vector<StepTrace>& traces) {
  std::ostringstream out;
  out << "t,filter,bx,by,bz,qx,qy,qz,rel_bx,rel_by,rel_bz,rel_qx,rel_qy,"
         "rel_qz\n";
  for (const auto& tr : traces) {
    const Pose rel =
        HomogeneousTransform::from_pose(
            relative_ee_in_needle(tr.mean_pose, tr.ee_measured))
            .inverse()
            .to_pose();
    out << tr.t << ',' << tr.filter;
    for (int k = 0; k < 3; ++k) out << ',' << fmt17(tr.mean_pose.b[k]);
    for (int k = 0; k < 3; ++k) out << ',' << fmt17(tr.mean_pose.q[k]);
    for (int k = 0; k < 3; ++k) out << ',' << fmt17(rel.b[k]);
    for (int k = 0; k < 3; ++k) out << ',' << fmt17(rel.q[k]);
    out << '\n';
  }
  return out.str();
}

std::string summary_to_json(const BenchmarkResult& result) {
  nlohmann::json j;
  for (const auto& [label, filters] : result.summary) {
    for (const auto& [name, s] : filters) {
      j[label][name] = {{"mean_err_b_mm", s.mean_err_b},
                        {"std_err_b_mm", s.std_err_b},
                        {"mean_err_q_rad", s.mean_err_q},
                        {"std_err_q_rad", s.std_err_q},
                        {"feasibility_rate", s.feasibility_rate},
                        {"mean_wall_ms", s.mean_wall_ms},
                        {"mean_n_eff", s.mean_n_eff},
                        {"mean_rel_err_b_mm", s.mean_rel_err_b},
                        {"mean_rel_err_q_rad", s.mean_rel_err_q},
                        {"rows", s.rows}};
    }
  }
  return j.dump(2) + "\n";
}

std::string plot_data_csv(const BenchmarkResult& result,
                          const std::map<std::string, double>& label_noise) {
  std::ostringstream out;
  out << "sigma_n_px,filter,mean_err_b_mm,std_err_b_mm,mean_err_q_rad,"
         "std_err_q_rad,feasibility_rate,mean_wall_ms\n";
  for (const auto& [label, filters] : result.summary) {
    const auto it = label_noise.find(label);
    if (it == label_noise.end()) continue;
    for (const auto& [name, s] : filters) {
      out << fmt9(it->second) << ',' << name << ',' << fmt9(s.mean_err_b)
          << ',' << fmt9(s.std_err_b) << ',' << fmt9(s.mean_err_q) << ','
          << fmt9(s.std_err_q) << ',' << fmt9(s.feasibility_rate) << ','
          << fmt9(s.mean_wall_ms) << '\n';
    }
  }
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string partial = path + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + partial);
    out << content;
    if (!out) throw IoError("write failed: " + partial);
  }
  std::error_code ec;
  std::filesystem::rename(partial, path, ec);
  if (ec) throw IoError("rename failed: " + partial + " -> " + path);
}

}  // namespace needletrack
