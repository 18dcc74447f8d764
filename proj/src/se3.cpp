#include "needletrack/se3.hpp"

#include <Eigen/LU>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace needletrack {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTinyAngle = 1e-12;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Axis sign convention for half-turn rotations: first nonzero component in
// (z, y, x) priority order must be nonnegative.
Eigen::Vector3d fix_pi_axis_sign(Eigen::Vector3d axis) {
  constexpr double tol = 1e-12;
  double lead = axis.z();
  if (std::abs(lead) <= tol) lead = axis.y();
  if (std::abs(lead) <= tol) lead = axis.x();
  if (lead < 0.0) axis = -axis;
  return axis;
}

}  // namespace

HomogeneousTransform HomogeneousTransform::from_pose(const Pose& p) {
  return HomogeneousTransform{axis_angle_to_matrix(p.q), p.b};
}

Pose HomogeneousTransform::to_pose() const {
  return Pose{t, matrix_to_axis_angle(R)};
}

HomogeneousTransform HomogeneousTransform::inverse() const {
  HomogeneousTransform out;
  out.R = R.transpose();
  out.t = -(out.R * t);
  return out;
}

bool HomogeneousTransform::is_valid(double tol) const {
  const Eigen::Matrix3d err =
      R.transpose() * R - Eigen::Matrix3d::Identity();
  return err.cwiseAbs().maxCoeff() < tol &&
         std::abs(R.determinant() - 1.0) < tol;
}

Eigen::Vector3d canonicalize_axis_angle(const Eigen::Vector3d& q) {
  double angle = q.norm();
  if (angle < kTinyAngle) return Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = q / angle;
  angle = std::fmod(angle, 2.0 * kPi);
  if (angle < 0.0) angle += 2.0 * kPi;
  if (angle > kPi) {
    angle = 2.0 * kPi - angle;
    axis = -axis;
  }
  if (angle < kTinyAngle) return Eigen::Vector3d::Zero();
  // Flip to the canonical half-turn representative only when the flip is a
  // true symmetry; away from pi it would change the rotation.
  if (std::abs(angle - kPi) < 1e-12) axis = fix_pi_axis_sign(axis);
  return axis * angle;
}

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& q) {
  if (!q.allFinite()) {
    throw std::invalid_argument("axis_angle_to_matrix: non-finite input");
  }
  const double angle = q.norm();
  if (angle < kTinyAngle) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d axis = q / angle;
  const Eigen::Matrix3d k = skew(axis);
  return Eigen::Matrix3d::Identity() + std::sin(angle) * k +
         (1.0 - std::cos(angle)) * (k * k);
}

Eigen::Vector3d matrix_to_axis_angle(const Eigen::Matrix3d& R) {
  const Eigen::Matrix3d err =
      R.transpose() * R - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(R.determinant() - 1.0) > 1e-6) {
    throw std::invalid_argument("matrix_to_axis_angle: not a rotation matrix");
  }

  // Go through a unit quaternion (Shepperd's branching on the largest of the
  // trace and the diagonal entries); this stays accurate near both 0 and pi,
  // unlike acos-of-trace or symmetric-part extraction.
  double w, x, y, z;
  const double tr = R.trace();
  if (tr > R(0, 0) && tr > R(1, 1) && tr > R(2, 2)) {
    const double r = std::sqrt(1.0 + tr);
    w = 0.5 * r;
    x = (R(2, 1) - R(1, 2)) / (2.0 * r);
    y = (R(0, 2) - R(2, 0)) / (2.0 * r);
    z = (R(1, 0) - R(0, 1)) / (2.0 * r);
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    const double r = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2));
    x = 0.5 * r;
    w = (R(2, 1) - R(1, 2)) / (2.0 * r);
    y = (R(0, 1) + R(1, 0)) / (2.0 * r);
    z = (R(0, 2) + R(2, 0)) / (2.0 * r);
  } else if (R(1, 1) > R(2, 2)) {
    const double r = std::sqrt(1.0 - R(0, 0) + R(1, 1) - R(2, 2));
    y = 0.5 * r;
    w = (R(0, 2) - R(2, 0)) / (2.0 * r);
    x = (R(0, 1) + R(1, 0)) / (2.0 * r);
    z = (R(1, 2) + R(2, 1)) / (2.0 * r);
  } else {
    const double r = std::sqrt(1.0 - R(0, 0) - R(1, 1) + R(2, 2));
    z = 0.5 * r;
    w = (R(1, 0) - R(0, 1)) / (2.0 * r);
    x = (R(0, 2) + R(2, 0)) / (2.0 * r);
    y = (R(1, 2) + R(2, 1)) / (2.0 * r);
  }
  Eigen::Vector3d v(x, y, z);
  if (w < 0.0) {
    w = -w;
    v = -v;
  }
  const double vn = v.norm();
  const double angle = 2.0 * std::atan2(vn, w);
  if (angle < kTinyAngle || vn == 0.0) return Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = v / vn;
  if (std::abs(angle - kPi) < 1e-12) axis = fix_pi_axis_sign(axis);
  return axis * angle;
}

HomogeneousTransform compose(const HomogeneousTransform& a,
                             const HomogeneousTransform& b) {
  HomogeneousTransform out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

Pose relative_ee_in_needle(const Pose& p_cn, const Pose& p_ce) {
  const auto h_cn = HomogeneousTransform::from_pose(p_cn);
  const auto h_ce = HomogeneousTransform::from_pose(p_ce);
  return compose(h_cn.inverse(), h_ce).to_pose();
}

double rotation_error(const Eigen::Vector3d& q_a,
                      const Eigen::Vector3d& q_b) {
  const Eigen::Matrix3d rel =
      axis_angle_to_matrix(q_a) * axis_angle_to_matrix(q_b).transpose();
  const Eigen::Vector3d r(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0),
                          rel(1, 0) - rel(0, 1));
  return std::atan2(r.norm(), rel.trace() - 1.0);
}

double position_error(const Eigen::Vector3d& b_a,
                      const Eigen::Vector3d& b_b) {
  return (b_a - b_b).norm();
}

}  // namespace needletrack
