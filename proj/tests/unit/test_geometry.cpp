#include "dfusion/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dfusion;

namespace {

CameraIntrinsics camera(double f = 500.0) { return {f, f, 160.0, 120.0, 320, 240}; }

// Rodrigues by hand, independent of se3_exp.
Mat3 rodrigues(const Vec3& w) {
  const double theta = w.norm();
  if (theta == 0.0) {
    return Mat3::Identity();
  }
  const Vec3 a = w / theta;
  Mat3 k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

double max_abs_diff(const RigidTransform& a, const RigidTransform& b) {
  return std::max((a.rotation() - b.rotation()).cwiseAbs().maxCoeff(),
                  (a.translation() - b.translation()).cwiseAbs().maxCoeff());
}

Twist random_twist(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Twist xi{Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng))};
  const double n = xi.to_vector().norm();
  return Twist::from_vector(xi.to_vector() * (scale * std::abs(u(rng)) / n));
}

}  // namespace

TEST_CASE("se3_exp examples") {
  const RigidTransform id = se3_exp(Twist{});
  CHECK(id.rotation() == Mat3::Identity());
  CHECK(id.translation() == Vec3::Zero());

  const RigidTransform tr = se3_exp(Twist{Vec3::Zero(), Vec3(0.1, 0.0, 0.0)});
  CHECK(tr.rotation() == Mat3::Identity());
  CHECK((tr.translation() - Vec3(0.1, 0.0, 0.0)).norm() < 1e-15);

  const RigidTransform rot = se3_exp(Twist{Vec3(0.0, 0.0, std::numbers::pi / 2), Vec3::Zero()});
  CHECK((rot.apply(Vec3(1.0, 0.0, 0.0)) - Vec3(0.0, 1.0, 0.0)).norm() < 1e-9);
}

TEST_CASE("se3_exp rotation matches Rodrigues and translation matches the left Jacobian") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const Twist xi = random_twist(rng, 2.0);
    const RigidTransform t = se3_exp(xi);
    CHECK((t.rotation() - rodrigues(xi.rotation)).cwiseAbs().maxCoeff() < 1e-12);
    // Left Jacobian by numeric integration of exp(s w) over s in [0, 1].
    Vec3 integral = Vec3::Zero();
    const int steps = 2000;
    for (int s = 0; s < steps; ++s) {
      integral += rodrigues(((s + 0.5) / steps) * xi.rotation) * xi.translation / steps;
    }
    CHECK((t.translation() - integral).norm() < 1e-6);
  }
}

TEST_CASE("se3_exp small-angle branch is continuous") {
  const Vec3 axis = Vec3(1.0, 2.0, -0.5).normalized();
  const Vec3 v(0.3, -0.1, 0.2);
  const RigidTransform below = se3_exp({0.5e-8 * axis, v});
  const RigidTransform above = se3_exp({2e-8 * axis, v});
  CHECK(max_abs_diff(below, above) < 1e-7);
  CHECK(below.orthonormality_error() < 1e-12);
}

TEST_CASE("exp(-xi) is the inverse of exp(xi)") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Twist xi = random_twist(rng, 1.0);
    CHECK(max_abs_diff(se3_exp(-xi), se3_exp(xi).inverse()) < 1e-9);
    CHECK(max_abs_diff(se3_exp(xi) * se3_exp(xi).inverse(), RigidTransform::identity()) < 1e-9);
  }
}

TEST_CASE("composition is associative and stays orthonormal over long chains") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const RigidTransform a = se3_exp(random_twist(rng, 1.0));
    const RigidTransform b = se3_exp(random_twist(rng, 1.0));
    const RigidTransform c = se3_exp(random_twist(rng, 1.0));
    CHECK(max_abs_diff((a * b) * c, a * (b * c)) < 1e-9);
  }
  RigidTransform chain;
  for (int i = 0; i < 1000; ++i) {
    chain = se3_exp(random_twist(rng, 0.5)) * chain;
    REQUIRE(chain.orthonormality_error() < 1e-9);
  }
  CHECK(chain.rotation().determinant() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("orthonormalize returns the nearest rotation") {
  const Mat3 r = rodrigues(Vec3(0.3, -0.2, 0.9));
  Mat3 noisy = r;
  noisy(0, 1) += 1e-4;
  noisy(2, 2) -= 2e-4;
  const Mat3 fixed = orthonormalize(noisy);
  CHECK((fixed.transpose() * fixed - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(fixed.determinant() == doctest::Approx(1.0));
  CHECK((fixed - r).norm() < 3e-4);
}

TEST_CASE("project examples") {
  const CameraIntrinsics k = camera();
  const auto center = project(Vec3(0.0, 0.0, 1.0), k);
  REQUIRE(center);
  CHECK(center->x() == 160.0);
  CHECK(center->y() == 120.0);
  const auto p = project(Vec3(0.1, 0.0, 1.0), k);
  REQUIRE(p);
  CHECK(p->x() == doctest::Approx(210.0));
  CHECK_FALSE(project(Vec3(0.0, 0.0, -0.2), k));
  CHECK_FALSE(project(Vec3(0.0, 0.0, 0.0), k));
  CHECK_FALSE(project(Vec3(10.0, 0.0, 1.0), k));
}

TEST_CASE("unproject examples and round trip") {
  const CameraIntrinsics k = camera();
  CHECK((unproject(Vec2(160.0, 120.0), 0.5, k) - Vec3(0.0, 0.0, 0.5)).norm() == 0.0);
  CHECK((unproject(Vec2(210.0, 120.0), 1.0, k) - Vec3(0.1, 0.0, 1.0)).norm() < 1e-15);
  CHECK_THROWS_AS((void)unproject(Vec2(10.0, 10.0), 0.0, k), std::invalid_argument);
  CHECK_THROWS_AS((void)unproject(Vec2(10.0, 10.0), -1.0, k), std::invalid_argument);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 319.0);
  std::uniform_real_distribution<double> v(0.0, 239.0);
  std::uniform_real_distribution<double> z(0.2, 5.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec2 px(u(rng), v(rng));
    const auto back = project(unproject(px, z(rng), k), k);
    REQUIRE(back);
    worst = std::max(worst, (*back - px).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("intrinsics and mesh validation") {
  CHECK_NOTHROW(camera().validate());
  CHECK_THROWS_AS((CameraIntrinsics{0.0, 1.0, 1.0, 1.0, 4, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((CameraIntrinsics{1.0, 1.0, 4.0, 1.0, 4, 4}.validate()), std::invalid_argument);

  TriangleMesh m;
  m.vertices = {Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
  m.normals = {Vec3::UnitZ(), Vec3::UnitZ(), Vec3::UnitZ()};
  m.colors.resize(3);
  m.triangles = {{0, 1, 2}};
  CHECK_NOTHROW(m.validate());
  m.triangles = {{0, 1, 3}};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.triangles = {{0, 1, 2}};
  m.normals[1] = Vec3(0.0, 0.0, 2.0);
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}
