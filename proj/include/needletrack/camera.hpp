#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "needletrack/grasp.hpp"
#include "needletrack/se3.hpp"

namespace needletrack {

/// Pinhole camera. The extrinsic maps rig-frame points into this camera's
/// frame (x_cam = R x_rig + t).
struct CameraModel {
  double fx = 256.0;
  double fy = 256.0;
  double cx = 128.0;
  double cy = 128.0;
  int width = 256;
  int height = 256;
  HomogeneousTransform extrinsic;

  bool in_image(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.x() < width && px.y() >= 0.0 &&
           px.y() < height;
  }
};

struct StereoRig {
  CameraModel left;
  CameraModel right;
  double baseline_mm = 5.0;

  /// Left camera at the rig origin, right camera shifted along +x.
  static StereoRig make(double fx, double fy, double cx, double cy, int width,
                        int height, double baseline_mm);

  const CameraModel& camera(int id) const { return id == 0 ? left : right; }
  static constexpr int kNumCameras = 2;
};

/// Per-timestep observation: detected pixel keypoints per camera plus the
/// measured end-effector pose in the camera frame.
struct DetectionFrame {
  int t = 0;
  std::array<std::vector<Eigen::Vector2d>, 2> points;
  Pose ee_pose;
};

/// k points evenly spaced in arc angle (both endpoints included) over the
/// needle arc, transformed into the camera frame. Requires k >= 2.
std::vector<Eigen::Vector3d> needle_arc_points(const Pose& needle_pose_cam,
                                               double radius_mm,
                                               std::size_t k,
                                               double arc_span_rad);

/// Pinhole projection of a rig-frame point. Empty when the point is behind
/// the camera (depth <= 1e-6 after the extrinsic).
std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& p3,
                                       const CameraModel& cam);

/// m arc points projected into both cameras with i.i.d. Gaussian pixel noise
/// of standard deviation sigma_n per axis. Points behind a camera or outside
/// its image are dropped, so a frame may carry fewer than m points per
/// camera. The measured end-effector pose is left for the caller to fill.
DetectionFrame generate_detections(const Pose& gt_needle_pose,
                                   const StereoRig& rig,
                                   const NeedleSpec& needle, std::size_t m,
                                   double sigma_n_px, std::uint64_t seed);

/// Detection-frame CSV: one row per keypoint (t, camera_id, u, v) and one
/// row per timestep for the measured end-effector pose
/// (t, bx, by, bz, qx, qy, qz). Full double precision.
std::string detection_frames_to_csv(const std::vector<DetectionFrame>& frames);

/// Parse the detection CSV format. Throws std::runtime_error with the
/// offending row number on malformed input; every timestep must carry
/// exactly one end-effector pose row.
std::vector<DetectionFrame> detection_frames_from_csv(const std::string& text);

}  // namespace needletrack
