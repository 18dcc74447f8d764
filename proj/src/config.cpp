#include "needletrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "needletrack/errors.hpp"

namespace needletrack {

using nlohmann::json;

namespace {

void expect_keys(const json& j, const std::string& where,
                 const std::set<std::string>& allowed) {
  if (!j.is_object()) {
    throw ConfigError("config: '" + where + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.contains(key)) {
      throw ConfigError("config: unknown key '" + where + "." + key + "'");
    }
  }
}

double get_num(const json& j, const std::string& where, const char* key,
               double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) {
    throw ConfigError("config: '" + where + "." + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

Eigen::Vector3d get_vec3(const json& j, const std::string& where,
                         const char* key, const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw ConfigError("config: '" + where + "." + key +
                      "' must be an array of 3 numbers");
  }
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

TrajectorySpec parse_trajectory(const json& j) {
  TrajectorySpec spec;
  if (j.is_string()) {
    spec.name = j.get<std::string>();
  } else if (j.is_object()) {
    expect_keys(j, "experiment.trajectory",
                {"name", "start_position_mm", "start_axis_angle",
                 "velocity_mm_per_step", "orbit_radius_mm",
                 "orbit_deg_per_step", "rotation_deg_per_step"});
    spec.name = j.value("name", spec.name);
    spec.start_position_mm = get_vec3(j, "experiment.trajectory",
                                      "start_position_mm",
                                      spec.start_position_mm);
    spec.start_axis_angle = get_vec3(j, "experiment.trajectory",
                                     "start_axis_angle",
                                     spec.start_axis_angle);
    spec.velocity_mm_per_step = get_vec3(j, "experiment.trajectory",
                                         "velocity_mm_per_step",
                                         spec.velocity_mm_per_step);
    spec.orbit_radius_mm = get_num(j, "experiment.trajectory",
                                   "orbit_radius_mm", spec.orbit_radius_mm);
    spec.orbit_deg_per_step =
        get_num(j, "experiment.trajectory", "orbit_deg_per_step",
                spec.orbit_deg_per_step);
    spec.rotation_deg_per_step =
        get_num(j, "experiment.trajectory", "rotation_deg_per_step",
                spec.rotation_deg_per_step);
  } else {
    throw ConfigError(
        "config: 'experiment.trajectory' must be a name or an object");
  }
  if (spec.name != "static" && spec.name != "line" && spec.name != "orbit") {
    throw ConfigError("config: unknown trajectory '" + spec.name + "'");
  }
  return spec;
}

FilterEntry parse_filter(const json& j, std::size_t index) {
  const std::string where = "filters." + std::to_string(index);
  expect_keys(j, where,
              {"name", "n", "motion_cov_diag", "n_eff_threshold", "seed",
               "retry_limit", "proposal_box_scale", "prefilter_max_attempts",
               "serial"});
  FilterEntry entry;
  if (!j.contains("name")) {
    throw ConfigError("config: '" + where + "' needs a name");
  }
  entry.name = j.at("name").get<std::string>();
  const FilterKind kind = filter_kind_from_name(entry.name);  // validates
  const bool reparam =
      kind == FilterKind::cpfrp || kind == FilterKind::chfrp;

  entry.cfg.n = static_cast<int>(get_num(j, where, "n", 2000));
  const int cov_size = reparam ? 4 : 6;
  if (j.contains("motion_cov_diag")) {
    const auto& a = j.at("motion_cov_diag");
    if (!a.is_array() || static_cast<int>(a.size()) != cov_size) {
      throw ConfigError("config: '" + where + ".motion_cov_diag' must have " +
                        std::to_string(cov_size) + " entries");
    }
    entry.cfg.motion_cov_diag.resize(cov_size);
    for (int k = 0; k < cov_size; ++k) {
      entry.cfg.motion_cov_diag[k] = a[static_cast<std::size_t>(k)]
                                         .get<double>();
    }
  } else if (reparam) {
    entry.cfg.motion_cov_diag =
        (Eigen::Vector4d() << 1e-4, 0.09, 9e-6, 3.6e-5).finished();
  } else {
    entry.cfg.motion_cov_diag.resize(6);
    entry.cfg.motion_cov_diag << 0.25, 0.25, 0.25, 3.05e-4, 3.05e-4, 3.05e-4;
  }
  entry.cfg.n_eff_threshold = get_num(j, where, "n_eff_threshold", -1.0);
  entry.cfg.retry_limit =
      static_cast<int>(get_num(j, where, "retry_limit", 100));
  entry.cfg.proposal_box_scale =
      get_num(j, where, "proposal_box_scale", 10.0);
  entry.cfg.prefilter_max_attempts = static_cast<std::int64_t>(
      get_num(j, where, "prefilter_max_attempts", 2000000));
  entry.cfg.exec = j.value("serial", false) ? Exec::serial : Exec::parallel;
  return entry;
}

}  // namespace

FilterEntry make_filter_entry(const std::string& name) {
  return parse_filter(json{{"name", name}}, 0);
}

json default_config_json() {
  return json{
      {"needle", {{"radius_mm", 5.4}, {"arc_span_rad", 3.141592653589793}}},
      {"bounds",
       {{"d_min", 1.0},
        {"d_max", 4.0},
        {"theta_min", 0.0},
        {"theta_max", 6.283185307179586},
        {"phi_min", 0.7853981633974483},
        {"phi_max", 2.356194490192345}}},
      {"rig",
       {{"fx", 256.0},
        {"fy", 256.0},
        {"cx", 128.0},
        {"cy", 128.0},
        {"width", 256},
        {"height", 256},
        {"baseline_mm", 5.0}}},
      {"observation", {{"sigma_o_px", 3.0}, {"curve_samples", 64}}},
      {"filters",
       json::array({json{{"name", "PF"}, {"n", 2000}},
                     json{{"name", "cHFrp"}, {"n", 2000}},
                     json{{"name", "cPFrp"}, {"n", 2000}}})},
      {"experiment",
       {{"trajectory", "orbit"},
        {"steps", 100},
        {"trials", 20},
        {"sigma_n_px", 2.0},
        {"sigma_ep_mm", 0.0},
        {"sigma_eo_deg", 0.0},
        {"seed", 20220901}}}};
}

AppConfig config_from_json(const json& j) {
  expect_keys(j, "<root>",
              {"needle", "bounds", "rig", "observation", "filters",
               "experiment"});
  AppConfig cfg;

  if (j.contains("needle")) {
    const auto& n = j.at("needle");
    expect_keys(n, "needle", {"radius_mm", "arc_span_rad"});
    cfg.needle.radius_mm = get_num(n, "needle", "radius_mm", 5.4);
    cfg.needle.arc_span_rad =
        get_num(n, "needle", "arc_span_rad", cfg.needle.arc_span_rad);
    if (!(cfg.needle.radius_mm > 0.0)) {
      throw ConfigError("config: needle.radius_mm must be > 0");
    }
  }

  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    expect_keys(b, "bounds",
                {"d_min", "d_max", "theta_min", "theta_max", "phi_min",
                 "phi_max"});
    try {
      cfg.bounds = GraspBounds(
          get_num(b, "bounds", "d_min", 1.0), get_num(b, "bounds", "d_max", 4.0),
          get_num(b, "bounds", "theta_min", 0.0),
          get_num(b, "bounds", "theta_max", 6.283185307179586),
          get_num(b, "bounds", "phi_min", 0.7853981633974483),
          get_num(b, "bounds", "phi_max", 2.356194490192345));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }

  if (j.contains("rig")) {
    const auto& r = j.at("rig");
    expect_keys(r, "rig",
                {"fx", "fy", "cx", "cy", "width", "height", "baseline_mm"});
    const double fx = get_num(r, "rig", "fx", 256.0);
    const double fy = get_num(r, "rig", "fy", 256.0);
    const double baseline = get_num(r, "rig", "baseline_mm", 5.0);
    const int width = static_cast<int>(get_num(r, "rig", "width", 256));
    const int height = static_cast<int>(get_num(r, "rig", "height", 256));
    if (fx <= 0.0 || fy <= 0.0 || width <= 0 || height <= 0 ||
        baseline <= 0.0) {
      throw ConfigError("config: rig intrinsics must be positive");
    }
    cfg.rig = StereoRig::make(fx, fy, get_num(r, "rig", "cx", 128.0),
                              get_num(r, "rig", "cy", 128.0), width, height,
                              baseline);
  }

  if (j.contains("observation")) {
    const auto& o = j.at("observation");
    expect_keys(o, "observation",
                {"sigma_o_px", "curve_samples", "floor_miss_px",
                 "outlier_weight"});
    cfg.observation.sigma_o_px = get_num(o, "observation", "sigma_o_px", 3.0);
    cfg.observation.curve_samples =
        static_cast<int>(get_num(o, "observation", "curve_samples", 64));
    cfg.observation.floor_miss_px =
        get_num(o, "observation", "floor_miss_px", 50.0);
    cfg.observation.outlier_weight =
        get_num(o, "observation", "outlier_weight", 0.0);
    if (!(cfg.observation.sigma_o_px > 0.0) ||
        cfg.observation.curve_samples < 8) {
      throw ConfigError(
          "config: observation needs sigma_o_px > 0 and curve_samples >= 8");
    }
  }

  if (j.contains("filters")) {
    const auto& f = j.at("filters");
    if (!f.is_array() || f.empty()) {
      throw ConfigError("config: 'filters' must be a nonempty array");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      try {
        cfg.filters.push_back(parse_filter(f[i], i));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
  } else {
    const json defaults = default_config_json();
    for (const json& entry : defaults.at("filters")) {
      cfg.filters.push_back(parse_filter(entry, cfg.filters.size()));
    }
  }

  if (j.contains("experiment")) {
    const auto& e = j.at("experiment");
    expect_keys(e, "experiment",
                {"trajectory", "steps", "trials", "sigma_n_px", "sigma_ep_mm",
                 "sigma_eo_deg", "seed", "detections_per_image",
                 "drift_cov_diag", "sigma_n_sweep_px", "rejection_trials"});
    auto& exp = cfg.experiment;
    if (e.contains("trajectory")) {
      exp.trajectory = parse_trajectory(e.at("trajectory"));
    }
    exp.steps = static_cast<int>(get_num(e, "experiment", "steps", 100));
    exp.trials = static_cast<int>(get_num(e, "experiment", "trials", 20));
    exp.sigma_n_px = get_num(e, "experiment", "sigma_n_px", 2.0);
    exp.sigma_ep_mm = get_num(e, "experiment", "sigma_ep_mm", 0.0);
    exp.sigma_eo_deg = get_num(e, "experiment", "sigma_eo_deg", 0.0);
    exp.seed = static_cast<std::uint64_t>(
        get_num(e, "experiment", "seed", 20220901.0));
    exp.detections_per_image = static_cast<int>(
        get_num(e, "experiment", "detections_per_image", 5));
    exp.rejection_trials = static_cast<int>(
        get_num(e, "experiment", "rejection_trials", 0));
    if (e.contains("drift_cov_diag")) {
      const auto& a = e.at("drift_cov_diag");
      if (!a.is_array() || a.size() != 4) {
        throw ConfigError(
            "config: 'experiment.drift_cov_diag' must have 4 entries");
      }
      for (int k = 0; k < 4; ++k) {
        exp.drift_cov_diag[k] = a[static_cast<std::size_t>(k)].get<double>();
      }
    }
    if (e.contains("sigma_n_sweep_px")) {
      const auto& a = e.at("sigma_n_sweep_px");
      if (!a.is_array()) {
        throw ConfigError(
            "config: 'experiment.sigma_n_sweep_px' must be an array");
      }
      for (const auto& v : a) exp.sigma_n_sweep_px.push_back(v.get<double>());
    }
    if (exp.steps < 1 || exp.trials < 1 || exp.sigma_n_px < 0.0 ||
        exp.sigma_ep_mm < 0.0 || exp.sigma_eo_deg < 0.0 ||
        exp.detections_per_image < 1) {
      throw ConfigError("config: experiment values out of range");
    }
  }

  return cfg;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: " +
                      assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // plain string
  }

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) {
      throw ConfigError("override has an empty path segment: " + assignment);
    }
    const bool is_index =
        key.find_first_not_of("0123456789") == std::string::npos;
    if (is_index && node->is_array()) {
      const std::size_t idx = std::stoul(key);
      if (idx >= node->size()) {
        throw ConfigError("override index out of range: " + assignment);
      }
      if (dot == std::string::npos) {
        (*node)[idx] = value;
        return;
      }
      node = &(*node)[idx];
    } else {
      if (dot == std::string::npos) {
        (*node)[key] = value;
        return;
      }
      node = &(*node)[key];
    }
    start = dot + 1;
  }
}

AppConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  json j;
  try {
    j = json::parse(in, nullptr, true, true);  // allow comments
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  for (const auto& assignment : overrides) {
    apply_override(j, assignment);
  }
  return config_from_json(j);
}

}  // namespace needletrack
