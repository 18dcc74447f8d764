#include <doctest.h>

#include <Eigen/Dense>
#include <numbers>

#include "helpers.hpp"
#include "needletrack/camera.hpp"

using namespace needletrack;
namespace tu = testutil;

namespace {
constexpr double kPi = std::numbers::pi;

StereoRig default_rig() {
  return StereoRig::make(256, 256, 128, 128, 256, 256, 5.0);
}

Pose needle_in_front() {
  Pose p;
  p.b = Eigen::Vector3d(0, 0, 100);
  p.q = Eigen::Vector3d(0.3, -0.2, 0.1);
  return p;
}
}  // namespace

TEST_SUITE_BEGIN("camera");

TEST_CASE("needle_arc_points unit-circle samples") {
  const auto pts = needle_arc_points(Pose::identity(), 1.0, 3, kPi);
  REQUIRE(pts.size() == 3);
  CHECK((pts[0] - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  CHECK((pts[1] - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
  CHECK((pts[2] - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);

  CHECK_THROWS_AS(needle_arc_points(Pose::identity(), 1.0, 1, kPi),
                  std::invalid_argument);
}

TEST_CASE("needle_arc_points circle membership and even spacing") {
  SplitMix64 rng(1);
  const double radius = 5.4;
  const Pose pose = tu::random_pose(rng);
  const auto inv = HomogeneousTransform::from_pose(pose).inverse();

  const auto pts = needle_arc_points(pose, radius, 100, kPi);
  for (const auto& p : pts) {
    const Eigen::Vector3d local = inv.apply(p);
    CHECK(std::abs(local.norm() - radius) < 1e-9);
    CHECK(std::abs(local.z()) < 1e-9);
  }
  const double chord0 = (pts[1] - pts[0]).norm();
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    CHECK(std::abs((pts[i + 1] - pts[i]).norm() - chord0) < 1e-9);
  }
}

TEST_CASE("needle_arc_points rigid across poses") {
  SplitMix64 rng(2);
  const auto reference = needle_arc_points(Pose::identity(), 5.4, 20, kPi);
  for (int trial = 0; trial < 20; ++trial) {
    const auto moved = needle_arc_points(tu::random_pose(rng), 5.4, 20, kPi);
    for (std::size_t i = 0; i < moved.size(); ++i) {
      for (std::size_t j = i + 1; j < moved.size(); ++j) {
        CHECK(std::abs((moved[i] - moved[j]).norm() -
                       (reference[i] - reference[j]).norm()) < 1e-9);
      }
    }
  }
}

TEST_CASE("project basics") {
  const auto rig = default_rig();
  const auto on_axis = project(Eigen::Vector3d(0, 0, 50), rig.left);
  REQUIRE(on_axis.has_value());
  CHECK(on_axis->x() == doctest::Approx(128.0));
  CHECK(on_axis->y() == doctest::Approx(128.0));

  // 45-degree ray: u = fx + cx.
  const auto diag = project(Eigen::Vector3d(50, 0, 50), rig.left);
  REQUIRE(diag.has_value());
  CHECK(diag->x() == doctest::Approx(256.0 + 128.0));
  CHECK(diag->y() == doctest::Approx(128.0));

  CHECK_FALSE(project(Eigen::Vector3d(0, 0, -5), rig.left).has_value());
  CHECK_FALSE(project(Eigen::Vector3d(0, 0, 0), rig.left).has_value());
}

TEST_CASE("project matches homogeneous projection-matrix oracle") {
  const auto rig = default_rig();
  SplitMix64 rng(3);
  std::uniform_real_distribution<double> span(-40.0, 40.0);
  std::uniform_real_distribution<double> depth(20.0, 200.0);

  for (const CameraModel* cam : {&rig.left, &rig.right}) {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = cam->fx;
    k(1, 1) = cam->fy;
    k(0, 2) = cam->cx;
    k(1, 2) = cam->cy;
    Eigen::Matrix<double, 3, 4> rt;
    rt.leftCols<3>() = cam->extrinsic.R;
    rt.col(3) = cam->extrinsic.t;
    const Eigen::Matrix<double, 3, 4> pmat = k * rt;

    for (int i = 0; i < 500; ++i) {
      const Eigen::Vector3d p(span(rng), span(rng), depth(rng));
      const Eigen::Vector4d ph(p.x(), p.y(), p.z(), 1.0);
      const Eigen::Vector3d uvw = pmat * ph;
      const auto got = project(p, *cam);
      REQUIRE(got.has_value());
      CHECK(std::abs(got->x() - uvw.x() / uvw.z()) < 1e-9);
      CHECK(std::abs(got->y() - uvw.y() / uvw.z()) < 1e-9);
    }
  }
}

TEST_CASE("project scale invariance along rays") {
  const auto rig = default_rig();
  SplitMix64 rng(4);
  std::uniform_real_distribution<double> span(-0.4, 0.4);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d dir(span(rng), span(rng), 1.0);
    const Eigen::Vector3d p = 50.0 * dir;
    const double lambda = scale(rng);
    const auto a = project(p, rig.left);
    const auto b = project(lambda * p, rig.left);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK((*a - *b).norm() < 1e-9);
  }
}

TEST_CASE("generate_detections noiseless equals projections") {
  const auto rig = default_rig();
  const NeedleSpec needle;
  const Pose pose = needle_in_front();
  const auto frame = generate_detections(pose, rig, needle, 5, 0.0, 9);
  const auto arc = needle_arc_points(pose, needle.radius_mm, 5,
                                     needle.arc_span_rad);
  for (int c = 0; c < 2; ++c) {
    REQUIRE(frame.points[c].size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto px = project(arc[i], rig.camera(c));
      REQUIRE(px.has_value());
      CHECK((frame.points[c][i] - *px).norm() == 0.0);
    }
  }
}

TEST_CASE("generate_detections noise statistics") {
  const auto rig = default_rig();
  const NeedleSpec needle;
  const Pose pose = needle_in_front();
  const double sigma = 2.0;

  const auto clean = generate_detections(pose, rig, needle, 5, 0.0, 1);
  double sum = 0.0, sum_sq = 0.0;
  long count = 0;
  Eigen::Vector2d mean_disp = Eigen::Vector2d::Zero();
  for (int rep = 0; rep < 1000; ++rep) {
    const auto noisy = generate_detections(pose, rig, needle, 5, sigma,
                                           1000 + rep);
    for (int c = 0; c < 2; ++c) {
      REQUIRE(noisy.points[c].size() == 5);
      for (std::size_t i = 0; i < 5; ++i) {
        const Eigen::Vector2d d = noisy.points[c][i] - clean.points[c][i];
        mean_disp += d;
        sum += d.x() + d.y();
        sum_sq += d.x() * d.x() + d.y() * d.y();
        count += 2;
      }
    }
  }
  const double n = static_cast<double>(count);
  const double mean = sum / n;
  const double std_dev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std_dev == doctest::Approx(sigma).epsilon(0.025));
  CHECK((mean_disp / (n / 2)).norm() < 0.1);
}

TEST_CASE("detection csv round trip") {
  const auto rig = default_rig();
  const NeedleSpec needle;
  std::vector<DetectionFrame> frames;
  SplitMix64 rng(6);
  for (int t = 0; t < 4; ++t) {
    auto f = generate_detections(needle_in_front(), rig, needle, 5, 1.5,
                                 100 + t);
    f.t = t;
    f.ee_pose = tu::random_pose(rng);
    frames.push_back(std::move(f));
  }
  const std::string csv = detection_frames_to_csv(frames);
  const auto parsed = detection_frames_from_csv(csv);
  REQUIRE(parsed.size() == frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    CHECK(parsed[t].t == frames[t].t);
    CHECK((parsed[t].ee_pose.b - frames[t].ee_pose.b).norm() == 0.0);
    CHECK((parsed[t].ee_pose.q - frames[t].ee_pose.q).norm() == 0.0);
    for (int c = 0; c < 2; ++c) {
      REQUIRE(parsed[t].points[c].size() == frames[t].points[c].size());
      for (std::size_t i = 0; i < frames[t].points[c].size(); ++i) {
        CHECK((parsed[t].points[c][i] - frames[t].points[c][i]).norm() ==
              0.0);
      }
    }
  }
}

TEST_CASE("detection csv rejects malformed input") {
  CHECK_THROWS_WITH_AS(detection_frames_from_csv(""),
                       doctest::Contains("no frames"), std::runtime_error);
  CHECK_THROWS_WITH_AS(detection_frames_from_csv("0,1,2\n"),
                       doctest::Contains("row 1"), std::runtime_error);
  CHECK_THROWS_WITH_AS(detection_frames_from_csv("0,0,1.0,abc\n"),
                       doctest::Contains("row 1"), std::runtime_error);
  // detection row without an end-effector pose row for its timestep
  CHECK_THROWS_AS(detection_frames_from_csv("0,0,1.0,2.0\n"),
                  std::runtime_error);
  // bad camera id
  CHECK_THROWS_AS(detection_frames_from_csv("0,7,1.0,2.0\n"),
                  std::runtime_error);
}

TEST_SUITE_END();
