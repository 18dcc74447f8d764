#include "needletrack/grasp.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "needletrack/rng.hpp"

namespace needletrack {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDegenerateTol = 1e-9;

double clip(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

double wrap_into_turn(double angle, double lo) {
  while (angle < lo) angle += 2.0 * kPi;
  while (angle >= lo + 2.0 * kPi) angle -= 2.0 * kPi;
  return angle;
}

}  // namespace

GraspBounds::GraspBounds(double d_min, double d_max, double theta_min,
                         double theta_max, double phi_min, double phi_max)
    : d_min_(d_min),
      d_max_(d_max),
      theta_min_(theta_min),
      theta_max_(theta_max),
      phi_min_(phi_min),
      phi_max_(phi_max) {
  if (!(d_min > 0.0) || !(d_min < d_max)) {
    throw std::invalid_argument("GraspBounds: need 0 < d_min < d_max");
  }
  if (!(theta_min < theta_max) || theta_max - theta_min > 2.0 * kPi) {
    throw std::invalid_argument(
        "GraspBounds: need theta_min < theta_max <= theta_min + 2pi");
  }
  if (!(phi_min < phi_max) || phi_min < 0.0 || phi_max > kPi) {
    throw std::invalid_argument(
        "GraspBounds: need 0 <= phi_min < phi_max <= pi");
  }
  s_min_ = {kPi / 2.0, d_min * d_min * d_min, theta_min / (2.0 * kPi),
            0.5 * (std::cos(phi_max) + 1.0)};
  s_max_ = {3.0 * kPi / 2.0, d_max * d_max * d_max, theta_max / (2.0 * kPi),
            0.5 * (std::cos(phi_min) + 1.0)};
}

GraspBounds GraspBounds::defaults() {
  return GraspBounds(1.0, 4.0, 0.0, 2.0 * kPi, kPi / 4.0, 3.0 * kPi / 4.0);
}

Eigen::Vector3d intermediate_to_reparam(const IntermediateParams& p) {
  if (p.d < 0.0) {
    throw std::invalid_argument("intermediate_to_reparam: d must be >= 0");
  }
  if (p.phi < 0.0 || p.phi > kPi) {
    throw std::invalid_argument(
        "intermediate_to_reparam: phi must lie in [0, pi]");
  }
  return {p.d * p.d * p.d, p.theta / (2.0 * kPi),
          0.5 * (std::cos(p.phi) + 1.0)};
}

IntermediateParams reparam_to_intermediate(double alpha, double w, double u,
                                           double v) {
  if (w < 0.0) {
    throw std::invalid_argument("reparam_to_intermediate: w must be >= 0");
  }
  if (v < 0.0 || v > 1.0) {
    throw std::invalid_argument(
        "reparam_to_intermediate: v must lie in [0, 1]");
  }
  IntermediateParams p;
  p.alpha = alpha;
  p.d = std::cbrt(w);
  p.theta = 2.0 * kPi * u;
  p.phi = std::acos(2.0 * v - 1.0);
  return p;
}

std::vector<GraspState> sample_feasible(const GraspBounds& bounds,
                                        std::size_t n, std::uint64_t seed) {
  if (n == 0) {
    throw std::invalid_argument("sample_feasible: n must be >= 1");
  }
  const Eigen::Vector4d& lo = bounds.state_min();
  const Eigen::Vector4d& hi = bounds.state_max();
  std::vector<GraspState> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(mix_seed(seed, i));
    Eigen::Vector4d x;
    for (int k = 0; k < 4; ++k) {
      std::uniform_real_distribution<double> dist(lo[k], hi[k]);
      x[k] = dist(rng);
    }
    out[i] = GraspState::from_vec(x);
  }
  return out;
}

GraspState clip_motion(const GraspState& s, const Eigen::Vector4d& action,
                       const Eigen::Vector4d& noise,
                       const GraspBounds& bounds) {
  const Eigen::Vector4d raw = s.to_vec() + action + noise;
  const Eigen::Vector4d& lo = bounds.state_min();
  const Eigen::Vector4d& hi = bounds.state_max();
  Eigen::Vector4d out;
  for (int k = 0; k < 4; ++k) out[k] = clip(raw[k], lo[k], hi[k]);
  return GraspState::from_vec(out);
}

bool is_feasible(const GraspState& s, const GraspBounds& bounds) {
  const Eigen::Vector4d x = s.to_vec();
  const Eigen::Vector4d& lo = bounds.state_min();
  const Eigen::Vector4d& hi = bounds.state_max();
  for (int k = 0; k < 4; ++k) {
    if (x[k] < lo[k] || x[k] > hi[k]) return false;
  }
  return true;
}

Pose state_to_pose(const GraspState& s, const Pose& ee_pose_cam,
                   const NeedleSpec& needle, const GraspBounds& bounds) {
  if (!is_feasible(s, bounds)) {
    throw std::invalid_argument("state_to_pose: infeasible grasp state");
  }
  const IntermediateParams p =
      reparam_to_intermediate(s.alpha, s.w, s.u, s.v);

  // Frame assembly runs in extended precision: the roll reference below
  // cancels almost completely when the needle tangent aligns with the
  // y-axis, and rounding there would leak into the returned pose at a level
  // the state recovery can no longer ignore. Positions are well conditioned;
  // only the frame and the compose chain need the extra bits.
  using Vec3L = Eigen::Matrix<long double, 3, 1>;
  using Mat3L = Eigen::Matrix<long double, 3, 3>;

  // Needle-frame geometry.
  const Vec3L grasped(needle.radius_mm * std::cos(p.alpha),
                      needle.radius_mm * std::sin(p.alpha), 0.0L);
  const Vec3L offset(p.d * std::sin(p.phi) * std::cos(p.theta),
                     p.d * std::sin(p.phi) * std::sin(p.theta),
                     p.d * std::cos(p.phi));
  const Vec3L ee_origin = grasped + offset;

  // End-effector frame: y points from its origin at the grasped point; x is
  // the needle-circle tangent at alpha projected orthogonal to y (falling
  // back to the needle normal when the tangent is parallel to y); z = x x y.
  const Vec3L y_axis = -offset / static_cast<long double>(p.d);
  const Vec3L tangent(-std::sin(p.alpha), std::cos(p.alpha), 0.0L);
  Vec3L x_axis = tangent - tangent.dot(y_axis) * y_axis;
  if (x_axis.norm() < kDegenerateTol) {
    const Vec3L normal(0.0L, 0.0L, 1.0L);
    x_axis = normal - normal.dot(y_axis) * y_axis;
  }
  x_axis.normalize();
  const Vec3L z_axis = x_axis.cross(y_axis);

  Mat3L rot_ne;
  rot_ne.col(0) = x_axis;
  rot_ne.col(1) = y_axis;
  rot_ne.col(2) = z_axis;

  const auto h_ce = HomogeneousTransform::from_pose(ee_pose_cam);
  const Mat3L rot_ce = h_ce.R.cast<long double>();
  const Mat3L rot_cn = rot_ce * rot_ne.transpose();
  const Vec3L b_cn = rot_ce * (rot_ne.transpose() * (-ee_origin)) +
                     h_ce.t.cast<long double>();

  Pose out;
  out.b = b_cn.cast<double>();
  out.q = matrix_to_axis_angle(rot_cn.cast<double>());
  return out;
}

std::optional<Eigen::Vector3d> grasped_point_in_needle_frame(
    const Pose& p_ne) {
  const Eigen::Matrix3d rot = axis_angle_to_matrix(p_ne.q);
  const Eigen::Vector3d y_axis = rot.col(1);
  if (std::abs(y_axis.z()) <= kDegenerateTol) return std::nullopt;
  const double beta = -p_ne.b.z() / y_axis.z();
  return p_ne.b + beta * y_axis;
}

namespace {

// Distance-to-circle refinement of the grasped point. The plane
// intersection b + beta*y amplifies rounding in b_z by 1/|y_z| as the
// y-axis approaches the needle plane; minimizing the distance from the line
// point b + t*y to the needle circle is well conditioned there because the
// circle radius pins the in-plane crossing. Started from the plane
// intersection, a few Newton steps recover the grasped point to machine
// precision for poses on the grasp manifold.
double refine_line_circle_parameter(const Eigen::Vector3d& b,
                                    const Eigen::Vector3d& y, double radius,
                                    double t0) {
  const Eigen::Vector2d b_xy = b.head<2>();
  const Eigen::Vector2d y_xy = y.head<2>();
  double t = t0;
  for (int iter = 0; iter < 8; ++iter) {
    const Eigen::Vector2d l = b_xy + t * y_xy;
    const double rho = l.norm();
    if (rho < 1e-12) break;
    const double lz = b.z() + t * y.z();
    const double drho = l.dot(y_xy) / rho;
    const double grad = (rho - radius) * drho + lz * y.z();
    const double curv_rho =
        drho * drho +
        (rho - radius) * (y_xy.squaredNorm() - drho * drho) / rho;
    const double hess = curv_rho + y.z() * y.z();
    if (!(hess > 1e-18)) break;
    const double step = grad / hess;
    t -= step;
    if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(t))) break;
  }
  return t;
}

}  // namespace

std::optional<RecoveredState> pose_to_state(const Pose& needle_pose_cam,
                                            const Pose& ee_pose_cam,
                                            const NeedleSpec& needle,
                                            const GraspBounds& bounds) {
  const Pose ee_in_needle = relative_ee_in_needle(needle_pose_cam, ee_pose_cam);
  const auto intersection = grasped_point_in_needle_frame(ee_in_needle);
  if (!intersection) return std::nullopt;

  const Eigen::Matrix3d rot_ne = axis_angle_to_matrix(ee_in_needle.q);
  const Eigen::Vector3d y_dir = rot_ne.col(1);
  const double beta = (*intersection - ee_in_needle.b).dot(y_dir);
  const double t_star = refine_line_circle_parameter(
      ee_in_needle.b, y_dir, needle.radius_mm, beta);
  const Eigen::Vector3d grasped_raw = ee_in_needle.b + t_star * y_dir;
  const Eigen::Vector3d grasped(grasped_raw.x(), grasped_raw.y(), 0.0);

  double alpha = std::atan2(grasped.y(), grasped.x());
  if (alpha < kPi / 2.0) alpha += 2.0 * kPi;

  const Eigen::Vector3d offset = ee_in_needle.b - grasped;
  const double d = offset.norm();
  if (d < kDegenerateTol) return std::nullopt;

  const double planar = std::hypot(offset.x(), offset.y());
  double theta = 0.0;  // azimuth is undefined at the pole; 0 by convention
  if (planar >= kDegenerateTol) {
    theta = wrap_into_turn(std::atan2(offset.y(), offset.x()),
                           bounds.theta_min());
  }
  const double phi = std::acos(clip(offset.z() / d, -1.0, 1.0));

  const Eigen::Vector3d wuv =
      intermediate_to_reparam({alpha, d, theta, phi});

  // Grasp-property residual: distance from the end-effector y-axis line to
  // the needle-circle point at the recovered alpha.
  const Eigen::Vector3d circle_point(needle.radius_mm * std::cos(alpha),
                                     needle.radius_mm * std::sin(alpha), 0.0);
  const Eigen::Vector3d rel = circle_point - ee_in_needle.b;
  const double residual = (rel - rel.dot(y_dir) * y_dir).norm();

  return RecoveredState{GraspState{alpha, wuv[0], wuv[1], wuv[2]}, residual};
}

GraspState weighted_mean_state(const std::vector<GraspState>& states,
                               const Eigen::VectorXd& weights) {
  if (states.empty() || weights.size() != static_cast<long>(states.size())) {
    throw std::invalid_argument(
        "weighted_mean_state: empty ensemble or size mismatch");
  }
  Eigen::Vector4d acc = Eigen::Vector4d::Zero();
  for (std::size_t i = 0; i < states.size(); ++i) {
    acc += weights[static_cast<long>(i)] * states[i].to_vec();
  }
  return GraspState::from_vec(acc);
}

}  // namespace needletrack
