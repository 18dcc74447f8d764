#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "needletrack/se3.hpp"

namespace needletrack {

/// Circular suture needle of known radius. The needle body is the arc of the
/// circle in the needle frame's xy-plane.
struct NeedleSpec {
  double radius_mm = 5.4;
  double arc_span_rad = 3.14159265358979323846;
};

/// Reparameterized grasp state. alpha picks the grasped point on the needle
/// circle; (w, u, v) encode the spherical offset (d, theta, phi) of the
/// end-effector origin from the grasped point as w = d^3, u = theta / 2pi,
/// v = (cos phi + 1) / 2. Under these coordinates the feasible set is an
/// axis-aligned box and uniform box sampling is volume-uniform in Cartesian
/// space.
struct GraspState {
  double alpha = 0.0;
  double w = 0.0;
  double u = 0.0;
  double v = 0.0;

  Eigen::Vector4d to_vec() const { return {alpha, w, u, v}; }
  static GraspState from_vec(const Eigen::Vector4d& x) {
    return {x[0], x[1], x[2], x[3]};
  }
};

/// The grasped-point angle plus the raw spherical offset of the end-effector
/// from that point: distance d (mm), azimuth theta and polar angle phi (rad),
/// all measured in the needle frame.
struct IntermediateParams {
  double alpha = 0.0;
  double d = 0.0;
  double theta = 0.0;
  double phi = 0.0;
};

/// Feasible-box limits. The box over (alpha, w, u, v) is derived from the
/// physical jaw limits on (d, theta, phi); alpha is always [pi/2, 3pi/2].
/// Note the v bounds swap direction because cos is decreasing: v_min comes
/// from phi_max.
class GraspBounds {
 public:
  GraspBounds(double d_min, double d_max, double theta_min, double theta_max,
              double phi_min, double phi_max);

  static GraspBounds defaults();

  double d_min() const { return d_min_; }
  double d_max() const { return d_max_; }
  double theta_min() const { return theta_min_; }
  double theta_max() const { return theta_max_; }
  double phi_min() const { return phi_min_; }
  double phi_max() const { return phi_max_; }

  const Eigen::Vector4d& state_min() const { return s_min_; }
  const Eigen::Vector4d& state_max() const { return s_max_; }

 private:
  double d_min_, d_max_;
  double theta_min_, theta_max_;
  double phi_min_, phi_max_;
  Eigen::Vector4d s_min_, s_max_;
};

/// (d, theta, phi) -> (w, u, v). Throws std::invalid_argument if phi is
/// outside [0, pi] or d < 0.
Eigen::Vector3d intermediate_to_reparam(const IntermediateParams& p);

/// (w, u, v) -> (d, theta, phi), alpha passed through. Throws
/// std::invalid_argument if w < 0 or v outside [0, 1].
IntermediateParams reparam_to_intermediate(double alpha, double w, double u,
                                           double v);

/// n independent uniform draws from the feasible box. Throws
/// std::invalid_argument for n = 0.
std::vector<GraspState> sample_feasible(const GraspBounds& bounds,
                                        std::size_t n, std::uint64_t seed);

/// One motion-model step: s + action + noise, clipped per component to the
/// feasible box. Output is always feasible.
GraspState clip_motion(const GraspState& s, const Eigen::Vector4d& action,
                       const Eigen::Vector4d& noise,
                       const GraspBounds& bounds);

/// Closed-interval containment in the feasible box.
bool is_feasible(const GraspState& s, const GraspBounds& bounds);

/// Needle pose in the camera frame for a feasible grasp state, given the
/// end-effector camera pose. The grasped point sits on the needle circle at
/// angle alpha; the end-effector origin is placed at spherical offset
/// (d, theta, phi) from it; the end-effector y-axis points at the grasped
/// point, with roll fixed by the needle-tangent convention. Throws on an
/// infeasible state.
Pose state_to_pose(const GraspState& s, const Pose& ee_pose_cam,
                   const NeedleSpec& needle, const GraspBounds& bounds);

/// Intersection of the end-effector y-axis with the needle xy-plane, in
/// needle-frame coordinates. Empty when the y-axis is (numerically) parallel
/// to the plane, which signals a non-graspable configuration.
std::optional<Eigen::Vector3d> grasped_point_in_needle_frame(
    const Pose& p_ne);

struct RecoveredState {
  GraspState state;
  /// Distance from the end-effector y-axis line to the needle-circle point
  /// at the recovered alpha. Zero (to rounding) for poses constructed by
  /// state_to_pose; used as the grasp-property residual by the pose-state
  /// feasibility oracle.
  double grasp_residual_mm = 0.0;
};

/// Inverse of state_to_pose. theta is wrapped into
/// [bounds.theta_min, bounds.theta_min + 2pi); alpha into [pi/2, 3pi/2] by
/// shifting the two-argument arctangent up one turn when it falls below
/// pi/2. The result may be out of bounds; feasibility is the caller's check.
/// Empty on degenerate geometry (y-axis parallel to the needle plane, or the
/// end-effector origin coinciding with the grasped point).
std::optional<RecoveredState> pose_to_state(const Pose& needle_pose_cam,
                                            const Pose& ee_pose_cam,
                                            const NeedleSpec& needle,
                                            const GraspBounds& bounds);

/// Component-wise weighted mean. Feasible whenever all inputs are feasible
/// (the box is convex). Weights must be normalized; throws
/// std::invalid_argument on an empty ensemble.
GraspState weighted_mean_state(const std::vector<GraspState>& states,
                               const Eigen::VectorXd& weights);

}  // namespace needletrack
