#include <gtest/gtest.h>

#include <random>

#include "thermopol/scene.hpp"

using namespace thermopol;

namespace {

CameraView identity_camera() { return CameraView(Intrinsics{}, Mat3::Identity(), Vec3(0, 0, 3)); }

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

}  // namespace

TEST(Turntable, FourViewsOnCircle) {
  const auto views = turntable_poses(4, 3.0, 0.0, Vec3::Zero());
  ASSERT_EQ(views.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    const Vec3 c = views[i].center();
    EXPECT_NEAR(c.norm(), 3.0, 1e-12);
    EXPECT_NEAR(c.z(), 0.0, 1e-12);
    const Vec3 next = views[(i + 1) % 4].center();
    EXPECT_NEAR(c.dot(next), 0.0, 1e-10);  // 90 degrees apart
  }
}

TEST(Turntable, RotationsOrthonormalAndAimed) {
  const Vec3 target(0.2, -0.1, 0.3);
  for (double elev : {-0.4, 0.0, 0.3, 1.2}) {
    for (const auto& v : turntable_poses(20, 4.0, elev, target)) {
      EXPECT_LT((v.rotation() * v.rotation().transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
      const auto px = v.project(target);
      ASSERT_TRUE(px.has_value());
      EXPECT_NEAR(px->x(), v.cx(), 1e-6);
      EXPECT_NEAR(px->y(), v.cy(), 1e-6);
    }
  }
}

TEST(Turntable, RejectsBadArguments) {
  EXPECT_THROW(turntable_poses(1, 3.0, 0.0, Vec3::Zero()), DomainError);
  EXPECT_THROW(turntable_poses(4, 0.0, 0.0, Vec3::Zero()), DomainError);
  EXPECT_THROW(turntable_poses(4, 3.0, 1.6, Vec3::Zero()), DomainError);
}

TEST(PixelRay, PrincipalPointAlongAxis) {
  const auto v = turntable_poses(5, 4.0, 0.3, Vec3::Zero())[2];
  const Ray r = pixel_ray(v, v.cx(), v.cy());
  EXPECT_LT((r.direction - v.r3()).norm(), 1e-12);
  EXPECT_LT((r.origin - v.center()).norm(), 1e-12);
}

TEST(PixelRay, ProjectionRoundTrip) {
  const auto views = turntable_poses(7, 4.0, 0.2, Vec3::Zero());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 127.99), s(0.1, 10.0);
  for (int i = 0; i < 500; ++i) {
    const auto& v = views[i % views.size()];
    const double a = u(rng), b = u(rng);
    const Ray r = pixel_ray(v, a, b);
    EXPECT_NEAR(r.direction.norm(), 1.0, 1e-14);
    const auto px = v.project(r.at(s(rng)));
    ASSERT_TRUE(px.has_value());
    EXPECT_NEAR(px->x(), a, 1e-9);
    EXPECT_NEAR(px->y(), b, 1e-9);
  }
  EXPECT_THROW(pixel_ray(views[0], -1.0, 3.0), DomainError);
  EXPECT_THROW(pixel_ray(views[0], 3.0, 128.0), DomainError);
}

TEST(Intersect, AxisRayHitsSphere) {
  const Ray r{Vec3(0, 0, -3), Vec3(0, 0, 1)};
  const SurfaceHit h = intersect(Sphere{}, r);
  ASSERT_TRUE(h.hit());
  EXPECT_LT((h.point - Vec3(0, 0, -1)).norm(), 1e-6);
  EXPECT_NEAR(h.distance, 2.0, 1e-6);
  EXPECT_LT(h.normal.dot(r.direction), 0.0);
}

TEST(Intersect, OffsetRayMisses) {
  const Ray r{Vec3(1.2, 0, -3), Vec3(0, 0, 1)};
  EXPECT_FALSE(intersect(Sphere{}, r).hit());
  const Ray away{Vec3(0, 0, -3), Vec3(0, 0, -1)};
  EXPECT_FALSE(intersect(Sphere{}, away).hit());
}

TEST(Intersect, MatchesClosedFormOnRandomRays) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int i = 0; i < 300; ++i) {
    const Vec3 origin = 2.5 * random_unit(rng);
    const Vec3 target(u(rng), u(rng), u(rng));
    const Ray r{origin, (target * 0.5 - origin).normalized()};
    const auto span = ray_sphere_interval(r, Vec3::Zero(), 1.0);
    const SurfaceHit h = intersect(Sphere{}, r);
    ASSERT_TRUE(span.has_value());
    ASSERT_TRUE(h.hit());
    EXPECT_NEAR(h.distance, span->first, 1e-6);
    EXPECT_LT(h.normal.dot(r.direction), 0.0);
  }
}

TEST(Intersect, OtherShapes) {
  const Ray r{Vec3(-3, 0, 0), Vec3(1, 0, 0)};
  const SurfaceHit e = intersect(Ellipsoid{Vec3::Zero(), Vec3(0.5, 1, 1)}, r);
  ASSERT_TRUE(e.hit());
  EXPECT_NEAR(e.point.x(), -0.5, 1e-6);
  const SurfaceHit t = intersect(Torus{}, r);
  ASSERT_TRUE(t.hit());
  EXPECT_NEAR(t.point.x(), -0.95, 1e-6);
  SmoothUnion su{{Sphere{Vec3(-0.3, 0, 0), 0.5}, Sphere{Vec3(0.3, 0, 0), 0.5}}, 0.2};
  const SurfaceHit s = intersect(su, r);
  ASSERT_TRUE(s.hit());
  EXPECT_NEAR(s.point.x(), -0.8, 1e-6);
}

TEST(ShapeGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  const std::vector<AnalyticShape> shapes{
      Sphere{Vec3(0.1, 0, 0), 0.8}, Ellipsoid{Vec3::Zero(), Vec3(1.0, 0.7, 0.5)}, Torus{},
      SmoothUnion{{Sphere{Vec3(-0.3, 0, 0), 0.5}, Sphere{Vec3(0.3, 0.1, 0), 0.5}}, 0.2}};
  for (const auto& shape : shapes) {
    for (int i = 0; i < 100; ++i) {
      const Vec3 p(u(rng), u(rng), u(rng));
      Vec3 fd;
      const double h = 1e-6;
      for (int j = 0; j < 3; ++j) {
        Vec3 e = Vec3::Zero();
        e(j) = h;
        fd(j) = (shape_sdf(shape, p + e) - shape_sdf(shape, p - e)) / (2 * h);
      }
      EXPECT_LT((fd - shape_gradient(shape, p)).norm(), 1e-5);
    }
  }
}

TEST(ProjectedAzimuth, AxisExamples) {
  const CameraView v = identity_camera();
  EXPECT_NEAR(projected_azimuth(Vec3(0, 1, 0), v), 0.0, 1e-15);
  EXPECT_NEAR(projected_azimuth(Vec3(1, 0, 0), v), kPi / 2, 1e-15);
  EXPECT_NEAR(projected_azimuth(Vec3(0, -1, 0), v), 0.0, 1e-15);  // mod pi
  EXPECT_THROW(projected_azimuth(Vec3(0, 0, -1), v), DegenerateProjection);
}

TEST(ProjectedAzimuth, SatisfiesTangentIdentity) {
  std::mt19937_64 rng(21);
  const auto views = turntable_poses(13, 4.0, 0.5, Vec3::Zero());
  for (int i = 0; i < 2000; ++i) {
    const Vec3 n = random_unit(rng);
    const auto& v = views[i % views.size()];
    const double phi = projected_azimuth(n, v);
    EXPECT_GE(phi, 0.0);
    EXPECT_LT(phi, kPi);
    EXPECT_NEAR(v.r1().dot(n) * std::cos(phi) - v.r2().dot(n) * std::sin(phi), 0.0, 1e-12);
  }
}

TEST(CameraView, RejectsInvalidPose) {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = -1.0;  // reflection
  EXPECT_THROW(CameraView(Intrinsics{}, bad, Vec3::Zero()), DomainError);
  Intrinsics k;
  k.fx = 0.0;
  EXPECT_THROW(CameraView(k, Mat3::Identity(), Vec3::Zero()), DomainError);
  EXPECT_FALSE(identity_camera().project(Vec3(0, 0, -5)).has_value());
}
