// needletrack: synthetic benchmark and tracking CLI for constrained in-hand
// suture needle pose estimation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "needletrack/config.hpp"
#include "needletrack/errors.hpp"
#include "needletrack/harness.hpp"

namespace nt = needletrack;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitInternal = 4;

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool config_required) {
  auto* config =
      cmd->add_option("--config", opts.config_path, "config JSON file");
  if (config_required) config->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--set", opts.overrides,
                  "config override, dotted path: key.path=value (repeatable)");
  cmd->add_option("--seed", opts.seed, "override experiment.seed");
}

nt::AppConfig load(const CommonOptions& opts) {
  nt::AppConfig cfg = nt::load_config(opts.config_path, opts.overrides);
  if (opts.seed >= 0) {
    cfg.experiment.seed = static_cast<std::uint64_t>(opts.seed);
  }
  return cfg;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw nt::IoError("cannot create output directory: " + dir);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nt::IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

int cmd_benchmark(const CommonOptions& opts) {
  const nt::AppConfig base = load(opts);
  ensure_out_dir(opts.out_dir);

  std::vector<nt::BenchmarkEntry> grid;
  std::map<std::string, double> label_noise;
  if (base.experiment.sigma_n_sweep_px.empty()) {
    grid.push_back({"main", base});
    label_noise["main"] = base.experiment.sigma_n_px;
  } else {
    for (double sigma : base.experiment.sigma_n_sweep_px) {
      nt::AppConfig cfg = base;
      cfg.experiment.sigma_n_px = sigma;
      const std::string label = "sn" + trim_number(sigma);
      label_noise[label] = sigma;
      grid.push_back({label, std::move(cfg)});
    }
  }
  if (base.experiment.rejection_trials > 0) {
    nt::AppConfig cfg = base;
    cfg.experiment.trials = base.experiment.rejection_trials;
    std::vector<nt::FilterEntry> filters;
    for (const char* name : {"cPFrp", "cPFrj"}) {
      const auto it =
          std::find_if(cfg.filters.begin(), cfg.filters.end(),
                       [&](const nt::FilterEntry& f) { return f.name == name; });
      filters.push_back(it != cfg.filters.end() ? *it
                                                : nt::make_filter_entry(name));
    }
    cfg.filters = std::move(filters);
    grid.push_back({"runtime", std::move(cfg)});
  }

  const nt::BenchmarkResult result = nt::run_benchmark(grid);
  for (const auto& [label, rows] : result.rows) {
    nt::write_file_atomic(opts.out_dir + "/raw_" + label + ".csv",
                          nt::trial_rows_to_csv(rows));
  }
  nt::write_file_atomic(opts.out_dir + "/summary.json",
                        nt::summary_to_json(result));
  nt::write_file_atomic(opts.out_dir + "/plot_data.csv",
                        nt::plot_data_csv(result, label_noise));
  std::cout << "benchmark: " << grid.size() << " config(s) -> " << opts.out_dir
            << "\n";
  return kExitOk;
}

int cmd_trial(const CommonOptions& opts, int trial_index,
              bool dump_detections) {
  const nt::AppConfig cfg = load(opts);
  ensure_out_dir(opts.out_dir);

  nt::RunTrialOptions run_opts;
  run_opts.keep_frames = dump_detections;
  const nt::TrialResult result = nt::run_trial(cfg, trial_index, run_opts);

  nt::write_file_atomic(opts.out_dir + "/trial_raw.csv",
                        nt::trial_rows_to_csv(result.rows));
  nt::write_file_atomic(opts.out_dir + "/trial_poses.csv",
                        nt::traces_to_pose_csv(result.traces));
  if (dump_detections) {
    nt::write_file_atomic(opts.out_dir + "/detections.csv",
                          nt::detection_frames_to_csv(result.frames));
  }
  std::cout << "trial " << trial_index << ": " << result.rows.size()
            << " rows -> " << opts.out_dir << "\n";
  return kExitOk;
}

int cmd_replay(const CommonOptions& opts, const std::string& detections_path,
               int trial_index) {
  const nt::AppConfig cfg = load(opts);
  ensure_out_dir(opts.out_dir);

  std::vector<nt::DetectionFrame> frames;
  try {
    frames = nt::detection_frames_from_csv(read_file(detections_path));
  } catch (const nt::IoError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw nt::DataError(e.what());
  }
  const auto traces = nt::replay_frames(cfg, frames, trial_index);
  nt::write_file_atomic(opts.out_dir + "/replay_poses.csv",
                        nt::traces_to_pose_csv(traces));
  std::cout << "replay: " << frames.size() << " frames -> " << opts.out_dir
            << "\n";
  return kExitOk;
}

json pose_to_json(const nt::Pose& p) {
  return json{{"b", {p.b.x(), p.b.y(), p.b.z()}},
              {"q", {p.q.x(), p.q.y(), p.q.z()}}};
}

json state_to_json(const nt::GraspState& s) {
  return json{{"alpha", s.alpha}, {"w", s.w}, {"u", s.u}, {"v", s.v}};
}

std::vector<std::string> violated_bounds(const nt::GraspState& s,
                                         const nt::GraspBounds& bounds) {
  static const char* names[4] = {"alpha", "w", "u", "v"};
  std::vector<std::string> out;
  const Eigen::Vector4d x = s.to_vec();
  for (int k = 0; k < 4; ++k) {
    if (x[k] < bounds.state_min()[k]) {
      out.push_back(std::string(names[k]) + " below minimum");
    } else if (x[k] > bounds.state_max()[k]) {
      out.push_back(std::string(names[k]) + " above maximum");
    }
  }
  return out;
}

nt::Pose parse_pose_arg(const std::vector<double>& v) {
  nt::Pose p;
  p.b = Eigen::Vector3d(v[0], v[1], v[2]);
  p.q = nt::canonicalize_axis_angle(Eigen::Vector3d(v[3], v[4], v[5]));
  return p;
}

int cmd_convert(const CommonOptions& opts, const std::string& mode,
                const std::vector<double>& values,
                const std::vector<double>& ee_values) {
  nt::AppConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = load(opts);
  } else if (!opts.overrides.empty()) {
    json j = nt::default_config_json();
    for (const auto& assignment : opts.overrides) {
      nt::apply_override(j, assignment);
    }
    cfg = nt::config_from_json(j);
  }
  const nt::Pose ee =
      ee_values.empty() ? nt::Pose::identity() : parse_pose_arg(ee_values);

  json out;
  out["ee_pose"] = pose_to_json(ee);
  if (mode == "state") {
    const nt::GraspState s{values[0], values[1], values[2], values[3]};
    out["input_state"] = state_to_json(s);
    const bool feasible = nt::is_feasible(s, cfg.bounds);
    out["feasible"] = feasible;
    out["violated"] = violated_bounds(s, cfg.bounds);
    if (feasible) {
      const nt::Pose pose = nt::state_to_pose(s, ee, cfg.needle, cfg.bounds);
      out["pose"] = pose_to_json(pose);
      if (const auto round =
              nt::pose_to_state(pose, ee, cfg.needle, cfg.bounds)) {
        out["round_trip_state"] = state_to_json(round->state);
        out["grasp_residual_mm"] = round->grasp_residual_mm;
      }
    }
  } else {
    const nt::Pose pose = parse_pose_arg(values);
    out["input_pose"] = pose_to_json(pose);
    const auto recovered = nt::pose_to_state(pose, ee, cfg.needle, cfg.bounds);
    if (!recovered) {
      out["degenerate"] = true;
      out["feasible"] = false;
    } else {
      out["state"] = state_to_json(recovered->state);
      out["grasp_residual_mm"] = recovered->grasp_residual_mm;
      const bool feasible = nt::is_feasible(recovered->state, cfg.bounds) &&
                            recovered->grasp_residual_mm < 0.1;
      out["feasible"] = feasible;
      out["violated"] = violated_bounds(recovered->state, cfg.bounds);
    }
  }
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constrained in-hand suture needle tracking toolkit"};
  app.require_subcommand(1);

  CommonOptions bench_opts;
  auto* bench = app.add_subcommand(
      "benchmark", "run the configured trial grid and write results");
  add_common(bench, bench_opts, true);

  CommonOptions trial_opts;
  int trial_index = 0;
  bool dump_detections = false;
  auto* trial = app.add_subcommand("trial", "run a single trial");
  add_common(trial, trial_opts, true);
  trial->add_option("--trial-index", trial_index, "trial index (seed stream)");
  trial->add_flag("--dump-detections", dump_detections,
                  "also write the generated detection CSV");

  CommonOptions replay_opts;
  std::string detections_path;
  int replay_index = 0;
  auto* replay = app.add_subcommand(
      "replay", "run filters over a recorded detection CSV");
  add_common(replay, replay_opts, true);
  replay->add_option("--detections", detections_path, "detection CSV file")
      ->required();
  replay->add_option("--trial-index", replay_index,
                     "trial index (seed stream)");

  CommonOptions convert_opts;
  std::vector<double> convert_values;
  std::vector<double> ee_values;
  auto* convert = app.add_subcommand(
      "convert", "one-shot grasp-state <-> pose conversion");
  add_common(convert, convert_opts, false);
  auto* conv_state = convert->add_subcommand("state", "alpha w u v -> pose");
  conv_state->add_option("values", convert_values, "alpha w u v")
      ->expected(4)
      ->required();
  auto* conv_pose =
      convert->add_subcommand("pose", "bx by bz qx qy qz -> state");
  conv_pose->add_option("values", convert_values, "bx by bz qx qy qz")
      ->expected(6)
      ->required();
  for (CLI::App* leaf : {conv_state, conv_pose}) {
    leaf->add_option("--ee", ee_values,
                     "end-effector pose: bx by bz qx qy qz")
        ->expected(6);
  }
  convert->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*bench) return cmd_benchmark(bench_opts);
    if (*trial) return cmd_trial(trial_opts, trial_index, dump_detections);
    if (*replay) return cmd_replay(replay_opts, detections_path, replay_index);
    if (*convert) {
      return cmd_convert(convert_opts, conv_state->parsed() ? "state" : "pose",
                         convert_values, ee_values);
    }
  } catch (const nt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nt::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nt::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nt::InvariantError& e) {
    std::cerr << "internal invariant breach: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
