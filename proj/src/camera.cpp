#include "needletrack/camera.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "needletrack/rng.hpp"

namespace needletrack {

StereoRig StereoRig::make(double fx, double fy, double cx, double cy,
                          int width, int height, double baseline_mm) {
  StereoRig rig;
  rig.left = CameraModel{fx, fy, cx, cy, width, height,
                         HomogeneousTransform::identity()};
  HomogeneousTransform right_extrinsic;
  right_extrinsic.t = Eigen::Vector3d(-baseline_mm, 0.0, 0.0);
  rig.right = CameraModel{fx, fy, cx, cy, width, height, right_extrinsic};
  rig.baseline_mm = baseline_mm;
  return rig;
}

std::vector<Eigen::Vector3d> needle_arc_points(const Pose& needle_pose_cam,
                                               double radius_mm,
                                               std::size_t k,
                                               double arc_span_rad) {
  if (k < 2) {
    throw std::invalid_argument("needle_arc_points: k must be >= 2");
  }
  const auto h = HomogeneousTransform::from_pose(needle_pose_cam);
  std::vector<Eigen::Vector3d> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double a =
        arc_span_rad * static_cast<double>(i) / static_cast<double>(k - 1);
    out.push_back(h.apply({radius_mm * std::cos(a), radius_mm * std::sin(a),
                           0.0}));
  }
  return out;
}

std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& p3,
                                       const CameraModel& cam) {
  const Eigen::Vector3d p = cam.extrinsic.apply(p3);
  if (p.z() <= 1e-6) return std::nullopt;
  return Eigen::Vector2d(cam.fx * p.x() / p.z() + cam.cx,
                         cam.fy * p.y() / p.z() + cam.cy);
}

DetectionFrame generate_detections(const Pose& gt_needle_pose,
                                   const StereoRig& rig,
                                   const NeedleSpec& needle, std::size_t m,
                                   double sigma_n_px, std::uint64_t seed) {
  if (m < 1) {
    throw std::invalid_argument("generate_detections: m must be >= 1");
  }
  if (sigma_n_px < 0.0) {
    throw std::invalid_argument("generate_detections: sigma_n must be >= 0");
  }
  const auto arc = needle_arc_points(gt_needle_pose, needle.radius_mm, m,
                                     needle.arc_span_rad);
  DetectionFrame frame;
  for (int c = 0; c < StereoRig::kNumCameras; ++c) {
    const CameraModel& cam = rig.camera(c);
    SplitMix64 rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (const auto& p : arc) {
      const auto px = project(p, cam);
      if (!px) continue;
      Eigen::Vector2d noisy = *px;
      if (sigma_n_px > 0.0) {
        noisy.x() += sigma_n_px * noise(rng);
        noisy.y() += sigma_n_px * noise(rng);
      }
      if (!cam.in_image(noisy)) continue;
      frame.points[c].push_back(noisy);
    }
  }
  return frame;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> parse_row(const std::string& line, std::size_t row) {
  std::vector<double> fields;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find(',', start);
    if (end == std::string::npos) end = line.size();
    const char* first = line.data() + start;
    const char* last = line.data() + end;
    while (first < last && *first == ' ') ++first;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      throw std::runtime_error("detection csv: malformed number in row " +
                               std::to_string(row));
    }
    fields.push_back(value);
    if (end == line.size()) break;
    start = end + 1;
  }
  return fields;
}

}  // namespace

std::string detection_frames_to_csv(
    const std::vector<DetectionFrame>& frames) {
  std::ostringstream out;
  for (const auto& frame : frames) {
    for (int c = 0; c < StereoRig::kNumCameras; ++c) {
      for (const auto& px : frame.points[c]) {
        out << frame.t << ',' << c << ',' << format_double(px.x()) << ','
            << format_double(px.y()) << '\n';
      }
    }
    out << frame.t << ',' << format_double(frame.ee_pose.b.x()) << ','
        << format_double(frame.ee_pose.b.y()) << ','
        << format_double(frame.ee_pose.b.z()) << ','
        << format_double(frame.ee_pose.q.x()) << ','
        << format_double(frame.ee_pose.q.y()) << ','
        << format_double(frame.ee_pose.q.z()) << '\n';
  }
  return out.str();
}

std::vector<DetectionFrame> detection_frames_from_csv(
    const std::string& text) {
  std::map<int, DetectionFrame> by_t;
  std::map<int, bool> has_pose;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = parse_row(line, row);
    if (fields.size() == 4) {
      const int t = static_cast<int>(fields[0]);
      const int cam = static_cast<int>(fields[1]);
      if (cam < 0 || cam >= StereoRig::kNumCameras) {
        throw std::runtime_error("detection csv: bad camera id in row " +
                                 std::to_string(row));
      }
      auto& frame = by_t[t];
      frame.t = t;
      frame.points[cam].emplace_back(fields[2], fields[3]);
    } else if (fields.size() == 7) {
      const int t = static_cast<int>(fields[0]);
      auto& frame = by_t[t];
      frame.t = t;
      frame.ee_pose.b = Eigen::Vector3d(fields[1], fields[2], fields[3]);
      frame.ee_pose.q = Eigen::Vector3d(fields[4], fields[5], fields[6]);
      has_pose[t] = true;
    } else {
      throw std::runtime_error("detection csv: wrong column count in row " +
                               std::to_string(row));
    }
  }
  if (by_t.empty()) {
    throw std::runtime_error("detection csv: no frames");
  }
  std::vector<DetectionFrame> frames;
  frames.reserve(by_t.size());
  for (auto& [t, frame] : by_t) {
    if (!has_pose[t]) {
      throw std::runtime_error(
          "detection csv: missing end-effector pose row for t = " +
          std::to_string(t));
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace needletrack
