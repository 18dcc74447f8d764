#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "needletrack/errors.hpp"
#include "needletrack/rng.hpp"

namespace needletrack {

/// States plus normalized nonnegative weights. The state type is GraspState
/// for the reparameterized filters and Pose for the pose-state baselines.
template <class S>
struct WeightedEnsemble {
  std::vector<S> states;
  Eigen::VectorXd weights;

  std::size_t size() const { return states.size(); }
};

inline void normalize_weights(Eigen::VectorXd& weights) {
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw InvariantError("normalize_weights: weight sum is not positive");
  }
  weights /= total;
}

inline void check_normalized(const Eigen::VectorXd& weights,
                             double tol = 1e-9) {
  if (std::abs(weights.sum() - 1.0) > tol) {
    throw InvariantError("ensemble weights drifted off normalization");
  }
}

/// 1 / sum(w_i^2): in [1, n] for normalized weights.
inline double effective_particles(const Eigen::VectorXd& weights) {
  return 1.0 / weights.squaredNorm();
}

/// Low-variance resampling: one uniform per stratum [(i-1)/n, i/n). Output
/// weights are uniform; the expected copy count of particle i is n * w_i.
template <class S>
void stratified_resample(WeightedEnsemble<S>& ensemble, std::uint64_t seed) {
  const std::size_t n = ensemble.states.size();
  SplitMix64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);

  std::vector<S> out;
  out.reserve(n);
  std::size_t j = 0;
  double cum = ensemble.weights[0];
  for (std::size_t i = 0; i < n; ++i) {
    double r = dist(rng);
    if (r <= 0.0) r = std::numeric_limits<double>::min();
    const double u = (static_cast<double>(i) + r) / static_cast<double>(n);
    while (u > cum && j + 1 < n) {
      ++j;
      cum += ensemble.weights[static_cast<long>(j)];
    }
    out.push_back(ensemble.states[j]);
  }
  ensemble.states = std::move(out);
  ensemble.weights.setConstant(1.0 / static_cast<double>(n));
}

}  // namespace needletrack
