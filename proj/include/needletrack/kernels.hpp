#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "needletrack/observation.hpp"
#include "needletrack/se3.hpp"

namespace needletrack {

/// Execution policy for the data-parallel kernels. Per-slot work is pure and
/// reductions run in a fixed order, so both policies produce bit-identical
/// results; `serial` exists as the reference path for tests and benchmarks.
enum class Exec { serial, parallel };

/// One log-likelihood per candidate pose.
Eigen::VectorXd batch_log_likelihoods(const LikelihoodModel& model,
                                      const std::vector<Pose>& poses,
                                      const DetectionFrame& frame, Exec exec);

/// Row-stochastic Gaussian diffusion over a fixed set of support points,
/// truncated at a squared-Mahalanobis radius and stored sparse. Each source
/// point spreads its probability mass over nearby supports in proportion to
/// the kernel, so diffusion preserves total weight. The kernel matrix is
/// symmetric and precomputed once; apply() is then a sparse matrix-vector
/// product per step.
class DiffusionKernel {
 public:
  /// sq_mahalanobis(i, j) must be symmetric with zero diagonal.
  static DiffusionKernel build(
      std::size_t n,
      const std::function<double(std::size_t, std::size_t)>& sq_mahalanobis,
      double truncation_radius_sq = 40.0);

  void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out,
             Exec exec) const;

  std::size_t size() const { return row_start_.size() - 1; }
  std::size_t stored_entries() const { return values_.size(); }

 private:
  std::vector<std::size_t> row_start_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> values_;
  Eigen::VectorXd row_sums_;
};

/// Dense, untruncated version of DiffusionKernel::apply, evaluated serially
/// from scratch. Reference implementation for tests and benchmarks; the
/// sparse kernel agrees with it up to the truncated tail mass.
Eigen::VectorXd diffusion_reference(
    std::size_t n,
    const std::function<double(std::size_t, std::size_t)>& sq_mahalanobis,
    const Eigen::VectorXd& in);

/// Squared Mahalanobis distance between two 4-vectors under a diagonal
/// covariance. Variances below 1e-300 are floored, which sends any nonzero
/// difference past every truncation radius (the zero-noise delta kernel).
double diag_sq_mahalanobis(const Eigen::Vector4d& a, const Eigen::Vector4d& b,
                           const Eigen::Vector4d& variances);

/// Squared Mahalanobis distance between two poses: squared translation
/// distance over an isotropic position variance plus the squared geodesic
/// rotation angle over the orientation variance. Isotropy keeps the value
/// invariant under a common rigid transport of both poses.
double pose_sq_mahalanobis(const Pose& a, const Pose& b,
                           double position_variance,
                           double orientation_variance);

}  // namespace needletrack
