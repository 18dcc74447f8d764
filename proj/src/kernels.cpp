#include "needletrack/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace needletrack {

Eigen::VectorXd batch_log_likelihoods(const LikelihoodModel& model,
                                      const std::vector<Pose>& poses,
                                      const DetectionFrame& frame, Exec exec) {
  const long n = static_cast<long>(poses.size());
  Eigen::VectorXd out(n);
  const bool par = exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < n; ++i) {
    out[i] = model.log_likelihood(poses[static_cast<std::size_t>(i)], frame);
  }
  return out;
}

DiffusionKernel DiffusionKernel::build(
    std::size_t n,
    const std::function<double(std::size_t, std::size_t)>& sq_mahalanobis,
    double truncation_radius_sq) {
  DiffusionKernel k;
  k.row_start_.assign(n + 1, 0);
  k.row_sums_ = Eigen::VectorXd::Zero(static_cast<long>(n));

  // Upper triangle once, mirrored; the diagonal contributes exp(0) = 1.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].emplace_back(static_cast<std::uint32_t>(i), 1.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m2 = sq_mahalanobis(i, j);
      if (m2 > truncation_radius_sq) continue;
      const double v = std::exp(-0.5 * m2);
      rows[i].emplace_back(static_cast<std::uint32_t>(j), v);
      rows[j].emplace_back(static_cast<std::uint32_t>(i), v);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    k.row_start_[i + 1] = k.row_start_[i] + rows[i].size();
  }
  k.cols_.reserve(k.row_start_[n]);
  k.values_.reserve(k.row_start_[n]);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& [col, v] : rows[i]) {
      k.cols_.push_back(col);
      k.values_.push_back(v);
      sum += v;
    }
    k.row_sums_[static_cast<long>(i)] = sum;
  }
  return k;
}

void DiffusionKernel::apply(const Eigen::VectorXd& in, Eigen::VectorXd& out,
                            Exec exec) const {
  const long n = static_cast<long>(size());
  if (in.size() != n) {
    throw std::invalid_argument("DiffusionKernel::apply: size mismatch");
  }
  // Each source j spreads mass K_ij / rowsum_j to destination i; dividing
  // up front turns the update into one symmetric sparse product.
  const Eigen::VectorXd scaled = in.cwiseQuotient(row_sums_);
  out.resize(n);
  const bool par = exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < n; ++i) {
    const std::size_t begin = row_start_[static_cast<std::size_t>(i)];
    const std::size_t end = row_start_[static_cast<std::size_t>(i) + 1];
    double acc = 0.0;
    for (std::size_t e = begin; e < end; ++e) {
      acc += values_[e] * scaled[cols_[e]];
    }
    out[i] = acc;
  }
}

Eigen::VectorXd diffusion_reference(
    std::size_t n,
    const std::function<double(std::size_t, std::size_t)>& sq_mahalanobis,
    const Eigen::VectorXd& in) {
  Eigen::MatrixXd kernel(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    kernel(static_cast<long>(i), static_cast<long>(i)) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::exp(-0.5 * sq_mahalanobis(i, j));
      kernel(static_cast<long>(i), static_cast<long>(j)) = v;
      kernel(static_cast<long>(j), static_cast<long>(i)) = v;
    }
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<long>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const double share =
        in[static_cast<long>(j)] / kernel.col(static_cast<long>(j)).sum();
    for (std::size_t i = 0; i < n; ++i) {
      out[static_cast<long>(i)] +=
          kernel(static_cast<long>(i), static_cast<long>(j)) * share;
    }
  }
  return out;
}

double diag_sq_mahalanobis(const Eigen::Vector4d& a, const Eigen::Vector4d& b,
                           const Eigen::Vector4d& variances) {
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double var = std::max(variances[k], 1e-300);
    const double d = a[k] - b[k];
    acc += d * d / var;
  }
  return acc;
}

double pose_sq_mahalanobis(const Pose& a, const Pose& b,
                           double position_variance,
                           double orientation_variance) {
  double acc =
      (a.b - b.b).squaredNorm() / std::max(position_variance, 1e-300);
  const double angle = rotation_error(a.q, b.q);
  acc += angle * angle / std::max(orientation_variance, 1e-300);
  return acc;
}

}  // namespace needletrack
