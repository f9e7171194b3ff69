#include <gtest/gtest.h>

#include <random>

#include "thermopol/evalkit.hpp"

using namespace thermopol;

namespace {

RigidTransform rotation_z(double angle, const Vec3& t) {
  RigidTransform r;
  r.rotation = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
  r.translation = t;
  return r;
}

PointCloud ellipsoid_cloud(std::size_t n, std::uint64_t seed) {
  return sample_shape(Ellipsoid{Vec3::Zero(), Vec3(1.0, 0.6, 0.4)}, n, seed, Box{}, 96);
}

double brute_nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) best = std::min(best, (p - q).squaredNorm());
  return best;
}

}  // namespace

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 2000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  pts.push_back(pts[10]);  // duplicate
  const KdTree tree(pts);
  for (int i = 0; i < 500; ++i) {
    const Vec3 q(1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng));
    const auto nn = tree.nearest(q);
    EXPECT_EQ(nn.squared_distance, brute_nearest(pts, q));
    EXPECT_EQ((pts[nn.index] - q).squaredNorm(), nn.squared_distance);
  }
  EXPECT_EQ(KdTree({}).nearest(Vec3::Zero()).index, -1);
}

TEST(Chamfer, IdenticalCloudsZero) {
  const PointCloud a = sample_shape(Sphere{}, 5000, 1);
  EXPECT_EQ(chamfer(a, a), 0.0);
}

TEST(Chamfer, ConcentricSpheres) {
  const PointCloud a = sample_shape(Sphere{Vec3::Zero(), 1.0}, 30000, 1);
  const PointCloud b = sample_shape(Sphere{Vec3::Zero(), 1.1}, 30000, 2);
  EXPECT_NEAR(chamfer(a, b), 0.1, 0.01);
  EXPECT_NEAR(chamfer(a, b), chamfer(b, a), 1e-15);
}

TEST(Chamfer, EmptyCloudRejected) {
  EXPECT_THROW(chamfer(PointCloud{}, sample_shape(Sphere{}, 10, 1)), DomainError);
}

TEST(Icp, IdenticalCloudsGiveIdentity) {
  const PointCloud a = ellipsoid_cloud(3000, 4);
  const IcpResult r = icp_align(a, a);
  EXPECT_LT((r.transform.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(r.transform.translation.norm(), 1e-10);
  EXPECT_LT(r.rmse, 1e-10);
}

TEST(Icp, RecoversKnownOffset) {
  const PointCloud target = ellipsoid_cloud(20000, 5);
  const RigidTransform offset = rotation_z(10.0 * kPi / 180.0, Vec3(0.1, 0.0, 0.0));
  const PointCloud source = transformed(target, offset);
  const IcpResult r = icp_align(source, target);
  const RigidTransform residual = offset.then(r.transform);  // should be identity
  EXPECT_LT(residual.angle(), 1e-3);
  EXPECT_LT(residual.translation.norm(), 1e-3);
  EXPECT_LT((r.transform.then(offset).rotation - Mat3::Identity()).norm(), 2e-3);
}

TEST(Icp, ErrorNeverIncreases) {
  const PointCloud target = ellipsoid_cloud(5000, 6);
  const PointCloud source =
      transformed(ellipsoid_cloud(5000, 7), rotation_z(0.3, Vec3(0.05, -0.08, 0.02)));
  const IcpResult r = icp_align(source, target);
  ASSERT_GE(r.error_history.size(), 2u);
  for (std::size_t i = 1; i < r.error_history.size(); ++i) {
    EXPECT_LE(r.error_history[i], r.error_history[i - 1]);
  }
  EXPECT_LT(r.error_history.back(), r.error_history.front());
}

TEST(Icp, DegenerateInputsRejected) {
  PointCloud two;
  two.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const PointCloud good = ellipsoid_cloud(100, 1);
  EXPECT_THROW(icp_align(two, good), DegenerateConfiguration);
  EXPECT_THROW(icp_align(good, two), DegenerateConfiguration);
  PointCloud line;
  for (int i = 0; i < 10; ++i) line.points.emplace_back(0.1 * i, 0.2 * i, 0.0);
  EXPECT_THROW(icp_align(line, good), DegenerateConfiguration);
}

TEST(RigidTransform, ComposeAndInvert) {
  const RigidTransform a = rotation_z(0.4, Vec3(1, 2, 3));
  const RigidTransform b = rotation_z(-1.1, Vec3(-0.5, 0, 0.2));
  const Vec3 p(0.3, -0.7, 0.9);
  EXPECT_LT((a.then(b).apply(p) - b.apply(a.apply(p))).norm(), 1e-14);
  EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-14);
  EXPECT_NEAR(a.angle(), 0.4, 1e-14);
}

TEST(NormalMae, KnownAngles) {
  Raster<float> est(2, 1, 3), gt(2, 1, 3);
  est.at(0, 0, 2) = 1;
  gt.at(0, 0, 2) = 1;
  est.at(1, 0, 0) = 1;
  gt.at(1, 0, 2) = 2;  // normalized internally; 90 degrees apart
  Mask all(2, 1, 1, 1);
  EXPECT_NEAR(normal_mae(est, gt, all), 45.0, 1e-6);
  Mask first(2, 1);
  first.at(0, 0) = 1;
  EXPECT_NEAR(normal_mae(est, gt, first), 0.0, 1e-6);
}

TEST(NormalMae, Errors) {
  Raster<float> est(2, 2, 3), gt(2, 2, 3, 1.0f), one(2, 2, 1);
  Mask m(2, 2, 1, 1);
  EXPECT_THROW(normal_mae(est, gt, m), DomainError);  // zero normal under the mask
  EXPECT_THROW(normal_mae(gt, gt, Mask(2, 2)), DomainError);
  EXPECT_THROW(normal_mae(gt, Raster<float>(3, 2, 3), m), ShapeMismatch);
  EXPECT_THROW(normal_mae(one, one, m), ShapeMismatch);
}

TEST(Sampling, MeshSamplesLieOnFaces) {
  const Mesh m = marching_cubes(AnalyticField<double>{Sphere{}}, 32, Box{});
  const PointCloud c = sample_mesh(m, 4000, 3);
  ASSERT_EQ(c.size(), 4000u);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(c.points[i].norm(), 1.0, 0.02);
    EXPECT_GT(c.normals[i].dot(c.points[i]), 0.9);
  }
  EXPECT_THROW(sample_mesh(Mesh{}, 10, 1), DomainError);
}

TEST(Sampling, AnalyticShapesProjectedOntoZeroSet) {
  const std::vector<AnalyticShape> shapes{Sphere{Vec3(0.1, 0, 0), 0.7}, Torus{},
                                          Ellipsoid{Vec3::Zero(), Vec3(1.0, 0.6, 0.4)}};
  for (const auto& s : shapes) {
    const PointCloud c = sample_shape(s, 2000, 8, Box{}, 64);
    for (const auto& p : c.points) EXPECT_LT(std::abs(shape_sdf(s, p)), 1e-9);
  }
}
