#pragma once

#include <Eigen/Core>

namespace needletrack {

/// Rigid-body pose: position in millimeters plus axis-angle orientation
/// (direction = rotation axis, magnitude = rotation angle in radians).
/// The canonical angle range is [0, pi]; larger angles are represented by
/// flipping the axis.
struct Pose {
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  Eigen::Vector3d q = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose{}; }
};

/// Rotation + translation, kept as a 3x3 matrix and a 3-vector.
struct HomogeneousTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static HomogeneousTransform identity() { return HomogeneousTransform{}; }
  static HomogeneousTransform from_pose(const Pose& p);

  Pose to_pose() const;
  HomogeneousTransform inverse() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }

  /// Max deviation of R'R from identity, plus |det - 1|.
  bool is_valid(double tol = 1e-9) const;
};

/// Wrap an axis-angle vector into the canonical range [0, pi]. For an exact
/// pi rotation the axis sign is fixed so that the first nonzero component in
/// (z, y, x) priority order is nonnegative.
Eigen::Vector3d canonicalize_axis_angle(const Eigen::Vector3d& q);

/// Rodrigues rotation. Angles below 1e-12 return identity.
/// Throws std::invalid_argument on non-finite input.
Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& q);

/// Inverse of axis_angle_to_matrix; always returns the canonical
/// representative. Throws std::invalid_argument if R is not orthonormal
/// within 1e-6.
Eigen::Vector3d matrix_to_axis_angle(const Eigen::Matrix3d& R);

HomogeneousTransform compose(const HomogeneousTransform& a,
                             const HomogeneousTransform& b);

/// Pose of the end-effector expressed in the needle frame, from the camera
/// frame poses of both: H(needle)^-1 * H(ee).
Pose relative_ee_in_needle(const Pose& p_cn, const Pose& p_ce);

/// Geodesic angle of the relative rotation between two orientations, in
/// [0, pi]. Symmetric, zero iff the rotations coincide.
double rotation_error(const Eigen::Vector3d& q_a, const Eigen::Vector3d& q_b);

/// Euclidean distance between positions, millimeters.
double position_error(const Eigen::Vector3d& b_a, const Eigen::Vector3d& b_b);

}  // namespace needletrack
