#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <numbers>

#include "helpers.hpp"
#include "needletrack/se3.hpp"

using namespace needletrack;
namespace tu = testutil;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_SUITE_BEGIN("se3");

TEST_CASE("axis_angle_to_matrix basics") {
  CHECK(axis_angle_to_matrix(Eigen::Vector3d::Zero())
            .isApprox(Eigen::Matrix3d::Identity(), 1e-15));

  const Eigen::Matrix3d half_turn_z =
      axis_angle_to_matrix(Eigen::Vector3d(0, 0, kPi));
  CHECK(half_turn_z.isApprox(
      Eigen::Vector3d(-1, -1, 1).asDiagonal().toDenseMatrix(), 1e-12));

  CHECK_THROWS_AS(
      axis_angle_to_matrix(Eigen::Vector3d(std::nan(""), 0, 0)),
      std::invalid_argument);
}

TEST_CASE("axis_angle_to_matrix matches quaternion construction") {
  SplitMix64 rng(101);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
    axis.normalize();
    const double angle = 0.7;
    const Eigen::Matrix3d expected =
        Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis)).toRotationMatrix();
    const Eigen::Matrix3d got = axis_angle_to_matrix(angle * axis);
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("matrix_to_axis_angle basics and conventions") {
  CHECK(matrix_to_axis_angle(Eigen::Matrix3d::Identity()).norm() == 0.0);

  // pi about z; the tie-break picks the +z representative.
  const Eigen::Vector3d q = matrix_to_axis_angle(
      Eigen::Vector3d(-1, -1, 1).asDiagonal().toDenseMatrix());
  CHECK(q.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q.z() == doctest::Approx(kPi).epsilon(1e-12));

  Eigen::Matrix3d not_rotation = Eigen::Matrix3d::Identity();
  not_rotation(0, 0) = 1.5;
  CHECK_THROWS_AS(matrix_to_axis_angle(not_rotation), std::invalid_argument);
}

TEST_CASE("axis-angle round trip over 10^4 rotations incl. near 0 and pi") {
  SplitMix64 rng(202);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Eigen::Matrix3d rot;
    if (i % 10 == 0) {
      // stress the extremes
      Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
      axis.normalize();
      const double eps = std::pow(10.0, -3.0 - 9.0 * unit(rng));
      const double angle = (i % 20 == 0) ? eps : kPi - eps;
      rot = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis))
                .toRotationMatrix();
    } else {
      rot = tu::random_rotation(rng);
    }
    const Eigen::Vector3d q = matrix_to_axis_angle(rot);
    CHECK(q.norm() <= kPi + 1e-12);
    const Eigen::Matrix3d back = axis_angle_to_matrix(q);
    worst = std::max(worst, (back - rot).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("canonicalize_axis_angle wraps into [0, pi]") {
  SplitMix64 rng(303);
  std::uniform_real_distribution<double> angle_dist(0.0, 6.0 * kPi);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
    axis.normalize();
    const double angle = angle_dist(rng);
    const Eigen::Vector3d canonical =
        canonicalize_axis_angle(angle * axis);
    CHECK(canonical.norm() <= kPi + 1e-12);
    CHECK(axis_angle_to_matrix(canonical)
              .isApprox(axis_angle_to_matrix(angle * axis), 1e-9));
  }
}

TEST_CASE("compose against dense 4x4 oracle") {
  SplitMix64 rng(404);
  for (int i = 0; i < 500; ++i) {
    const Pose pa = tu::random_pose(rng);
    const Pose pb = tu::random_pose(rng);
    const auto a = HomogeneousTransform::from_pose(pa);
    const auto b = HomogeneousTransform::from_pose(pb);

    Eigen::Matrix4d ma = Eigen::Matrix4d::Identity();
    ma.topLeftCorner<3, 3>() = a.R;
    ma.topRightCorner<3, 1>() = a.t;
    Eigen::Matrix4d mb = Eigen::Matrix4d::Identity();
    mb.topLeftCorner<3, 3>() = b.R;
    mb.topRightCorner<3, 1>() = b.t;
    const Eigen::Matrix4d expected = ma * mb;

    const auto got = compose(a, b);
    CHECK((got.R - expected.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK((got.t - expected.topRightCorner<3, 1>()).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("compose identities and associativity") {
  SplitMix64 rng(505);
  const auto id = HomogeneousTransform::identity();
  for (int i = 0; i < 200; ++i) {
    const auto a = HomogeneousTransform::from_pose(tu::random_pose(rng));
    const auto b = HomogeneousTransform::from_pose(tu::random_pose(rng));
    const auto c = HomogeneousTransform::from_pose(tu::random_pose(rng));

    const auto left_id = compose(id, b);
    CHECK((left_id.R - b.R).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((left_id.t - b.t).cwiseAbs().maxCoeff() < 1e-15);

    const auto self = compose(a, a.inverse());
    CHECK((self.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
          1e-10);
    CHECK(self.t.cwiseAbs().maxCoeff() < 1e-10);

    const auto ab_c = compose(compose(a, b), c);
    const auto a_bc = compose(a, compose(b, c));
    CHECK((ab_c.R - a_bc.R).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((ab_c.t - a_bc.t).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("relative_ee_in_needle") {
  SplitMix64 rng(606);
  const Pose some = tu::random_pose(rng);

  const Pose coincident = relative_ee_in_needle(some, some);
  CHECK(coincident.b.norm() < 1e-10);
  CHECK(coincident.q.norm() < 1e-9);

  const Pose from_identity = relative_ee_in_needle(Pose::identity(), some);
  CHECK((from_identity.b - some.b).norm() < 1e-12);
  CHECK(rotation_error(from_identity.q, some.q) < 1e-9);

  for (int i = 0; i < 300; ++i) {
    const Pose p_cn = tu::random_pose(rng);
    const Pose p_ce = tu::random_pose(rng);
    const Pose rel = relative_ee_in_needle(p_cn, p_ce);
    const auto recomposed =
        compose(HomogeneousTransform::from_pose(p_cn),
                HomogeneousTransform::from_pose(rel));
    const auto expected = HomogeneousTransform::from_pose(p_ce);
    CHECK((recomposed.R - expected.R).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((recomposed.t - expected.t).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rotation_error") {
  SplitMix64 rng(707);
  const Eigen::Vector3d qz(0, 0, kPi);
  CHECK(rotation_error(qz, qz) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rotation_error(qz, Eigen::Vector3d::Zero()) ==
        doctest::Approx(kPi).epsilon(1e-12));

  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d qa = tu::random_axis_angle(rng);
    const Eigen::Vector3d qb = tu::random_axis_angle(rng);

    // Quaternion-dot oracle.
    const auto to_quat = [](const Eigen::Vector3d& q) {
      const double angle = q.norm();
      if (angle < 1e-300) return Eigen::Quaterniond::Identity();
      return Eigen::Quaterniond(Eigen::AngleAxisd(angle, q / angle));
    };
    const double dot = std::abs(to_quat(qa).coeffs().dot(to_quat(qb).coeffs()));
    const double expected = 2.0 * std::acos(std::min(1.0, dot));

    const double got = rotation_error(qa, qb);
    CHECK(std::abs(got - expected) < 1e-9);
    CHECK(std::abs(got - rotation_error(qb, qa)) < 1e-12);
    CHECK(got >= 0.0);
    CHECK(got <= kPi + 1e-12);
  }
}

TEST_CASE("position_error") {
  CHECK(position_error(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 3)) ==
        0.0);
  CHECK(position_error(Eigen::Vector3d(1, 0, 0), Eigen::Vector3d::Zero()) ==
        1.0);
  SplitMix64 rng(808);
  std::normal_distribution<double> normal(0.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d a(normal(rng), normal(rng), normal(rng));
    Eigen::Vector3d b(normal(rng), normal(rng), normal(rng));
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    CHECK(position_error(a, b) == doctest::Approx(std::sqrt(acc)));
  }
}

TEST_SUITE_END();
