#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "needletrack/camera.hpp"
#include "needletrack/filters.hpp"
#include "needletrack/grasp.hpp"
#include "needletrack/observation.hpp"

namespace needletrack {

struct TrajectorySpec {
  std::string name = "orbit";
  Eigen::Vector3d start_position_mm{0.0, 0.0, 100.0};
  Eigen::Vector3d start_axis_angle{0.0, 0.0, 0.0};
  // line
  Eigen::Vector3d velocity_mm_per_step{1.0, 0.0, 0.0};
  // orbit
  double orbit_radius_mm = 15.0;
  double orbit_deg_per_step = 3.6;
  double rotation_deg_per_step = 1.0;
};

struct FilterEntry {
  std::string name;
  FilterConfig cfg;
};

struct ExperimentConfig {
  TrajectorySpec trajectory;
  int steps = 100;
  int trials = 20;
  double sigma_n_px = 2.0;
  double sigma_ep_mm = 0.0;
  double sigma_eo_deg = 0.0;
  std::uint64_t seed = 20220901;
  int detections_per_image = 5;
  /// Optional per-step Gaussian drift of the ground-truth grasp state.
  Eigen::Vector4d drift_cov_diag = Eigen::Vector4d::Zero();
  /// Noise sweep for the benchmark command; empty means a single run at
  /// sigma_n_px.
  std::vector<double> sigma_n_sweep_px;
  /// Trials for the benchmark's rejection-runtime comparison phase
  /// (cPFrp vs cPFrj); 0 disables the phase.
  int rejection_trials = 0;
};

struct AppConfig {
  NeedleSpec needle;
  GraspBounds bounds = GraspBounds::defaults();
  StereoRig rig = StereoRig::make(256, 256, 128, 128, 256, 256, 5.0);
  ObservationParams observation;
  std::vector<FilterEntry> filters;
  ExperimentConfig experiment;
};

/// Shipped defaults as a JSON document (the same content as
/// configs/default.json).
nlohmann::json default_config_json();

/// A filter entry with defaulted configuration for the given filter name.
FilterEntry make_filter_entry(const std::string& name);

/// Parse and validate. Unknown keys anywhere raise ConfigError.
AppConfig config_from_json(const nlohmann::json& j);

/// Read a config file, apply --set overrides, validate. Parse failures
/// raise ConfigError with line/column diagnostics.
AppConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides);

/// Apply one "dotted.path=value" override onto a JSON document. Array
/// elements are addressed by numeric path segments. The value is parsed as
/// JSON when possible and falls back to a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace needletrack
