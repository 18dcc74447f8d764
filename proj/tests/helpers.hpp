#pragma once

// Test-only oracles and generators, independent of the library's own
// geometry paths: quaternion-based rotations via Eigen, KS and chi-square
// p-values, and seeded random pose/state generation.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "needletrack/grasp.hpp"
#include "needletrack/rng.hpp"
#include "needletrack/se3.hpp"

namespace testutil {

inline Eigen::Quaterniond random_quaternion(needletrack::SplitMix64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q;
}

inline Eigen::Matrix3d random_rotation(needletrack::SplitMix64& rng) {
  return random_quaternion(rng).toRotationMatrix();
}

inline Eigen::Vector3d random_axis_angle(needletrack::SplitMix64& rng,
                                         double max_angle = M_PI) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
  axis.normalize();
  std::uniform_real_distribution<double> angle_dist(0.0, max_angle);
  return angle_dist(rng) * axis;
}

inline needletrack::Pose random_pose(needletrack::SplitMix64& rng,
                                     double position_scale = 50.0) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  needletrack::Pose p;
  p.b = position_scale * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
  p.q = random_axis_angle(rng);
  return p;
}

/// Compact-scale pose for geometry round-trip tests; keeps the stored pose
/// components near the grasp geometry's own scale.
inline needletrack::Pose random_compact_pose(needletrack::SplitMix64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  needletrack::Pose p;
  p.b = 20.0 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
  p.q = random_axis_angle(rng);
  return p;
}

/// End-effector pose in front of the stereo rig, randomly jittered so the
/// needle stays in view.
inline needletrack::Pose random_ee_pose_in_view(needletrack::SplitMix64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  needletrack::Pose p;
  p.b = Eigen::Vector3d(8.0 * unit(rng), 8.0 * unit(rng),
                        100.0 + 15.0 * unit(rng));
  p.q = random_axis_angle(rng);
  return p;
}

/// Asymptotic Kolmogorov distribution tail probability.
inline double ks_p_value(double d_stat, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d_stat;
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    p += sign * 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    sign = -sign;
  }
  return std::min(1.0, std::max(0.0, p));
}

/// One-sample KS test against U(lo, hi).
inline double ks_uniform_p_value(std::vector<double> samples, double lo,
                                 double hi) {
  std::sort(samples.begin(), samples.end());
  const auto n = samples.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = (samples[i] - lo) / (hi - lo);
    const double lo_step = static_cast<double>(i) / static_cast<double>(n);
    const double hi_step =
        static_cast<double>(i + 1) / static_cast<double>(n);
    d = std::max(d, std::max(std::abs(cdf - lo_step), std::abs(hi_step - cdf)));
  }
  return ks_p_value(d, n);
}

/// Regularized upper incomplete gamma Q(a, x) by series / continued
/// fraction.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // lower series
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - gln);
    return 1.0 - p;
  }
  // continued fraction
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

/// Chi-square tail probability with k degrees of freedom.
inline double chi2_p_value(double stat, double dof) {
  return gamma_q(0.5 * dof, 0.5 * stat);
}

/// Uniform feasible grasp states via the library sampler (containment is
/// separately verified against the bounds).
inline needletrack::GraspState random_feasible_state(
    const needletrack::GraspBounds& bounds, needletrack::SplitMix64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::Vector4d x;
  for (int k = 0; k < 4; ++k) {
    x[k] = bounds.state_min()[k] +
           unit(rng) * (bounds.state_max()[k] - bounds.state_min()[k]);
  }
  return needletrack::GraspState::from_vec(x);
}

}  // namespace testutil
