#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "thermopol/marching_cubes.hpp"
#include "thermopol/raymarch.hpp"
#include "thermopol/sdf_network.hpp"

using namespace thermopol;

namespace {

std::vector<Ray> random_rays(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  std::vector<Ray> rays;
  for (int i = 0; i < n; ++i) {
    const Vec3 o = 3.0 * Vec3(g(rng), g(rng), g(rng)).normalized();
    const Vec3 target(u(rng), u(rng), u(rng));
    rays.push_back({o, (target - o).normalized()});
  }
  return rays;
}

struct ConstantField {
  using Scalar = double;
  double c = 1.0;
  RowVectorX<double> evaluate(const Points<double>& x) const { return RowVectorX<double>::Constant(x.cols(), c); }
};

double max_radius_error(const Mesh& m, double r) {
  double e = 0.0;
  for (const auto& v : m.vertices) e = std::max(e, std::abs(v.norm() - r));
  return e;
}

}  // namespace

TEST(TraceField, AnalyticSphereMatchesIntersect) {
  const AnalyticField<double> field{Sphere{}};
  const auto rays = random_rays(400, 1);
  FieldTraceOptions opts;
  opts.hit_epsilon = 1e-7;
  opts.compute_normals = true;
  const auto hits = trace_field(field, rays, opts);
  int n_hit = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const SurfaceHit ref = intersect(Sphere{}, rays[i]);
    const Vec3 o = rays[i].origin, d = rays[i].direction;
    // Grazing rays creep along the surface and may run out of steps.
    if (std::abs((o - o.dot(d) * d).norm() - 1.0) < 0.01) continue;
    ASSERT_EQ(ref.hit(), hits[i].hit()) << i;
    if (!ref.hit()) continue;
    ++n_hit;
    EXPECT_LT((hits[i].point - ref.point).norm(), 1e-5);
    EXPECT_LT((hits[i].normal - hits[i].point.normalized()).norm(), 1e-5);
  }
  EXPECT_GT(n_hit, 100);
}

TEST(TraceField, ScaledFieldStillConverges) {
  // A field that overestimates distance overshoots; bisection recovers the root.
  const AnalyticField<double> field{Sphere{}, 1.0, 1.8};
  const Ray r{Vec3(0, 0, -3), Vec3(0, 0, 1)};
  const auto hits = trace_field(field, std::vector<Ray>{r});
  ASSERT_TRUE(hits[0].hit());
  EXPECT_NEAR(hits[0].point.z(), -1.0, 1e-5);
}

TEST(TraceField, MissesPointingAway) {
  const AnalyticField<double> field{Sphere{}};
  const std::vector<Ray> rays{{Vec3(0, 0, -3), Vec3(0, 0, -1)}, {Vec3(0, 1.4, -3), Vec3(0, 0, 1)}};
  for (const auto& h : trace_field(field, rays)) EXPECT_FALSE(h.hit());
}

TEST(TraceField, WorksOnFloatNetwork) {
  const SdfNetwork<float> net(NetworkArch{32, 8, 6, 4, 100.0, 0.5}, 3);
  const Ray r{Vec3(0, 0, -3), Vec3(0, 0, 1)};
  const auto hits = trace_field(net, std::vector<Ray>{r});
  ASSERT_TRUE(hits[0].hit());
  EXPECT_LT(std::abs(net.value_at(hits[0].point)), 1e-3);
}

TEST(MinFieldOnRays, FarRayGivesDistanceToSurface) {
  const AnalyticField<double> field{Sphere{}};
  for (double offset : {1.1, 1.3, 1.45}) {
    const Ray r{Vec3(offset, 0, -3), Vec3(0, 0, 1)};
    const auto m = min_field_on_rays(field, std::vector<Ray>{r}, 1.5);
    EXPECT_NEAR(m[0].value, offset - 1.0, 1e-6);
    EXPECT_NEAR(m[0].point.z(), 0.0, 1e-3);
  }
  // Outside the bounding sphere: closest approach to the origin.
  const Ray far{Vec3(2.0, 0, -3), Vec3(0, 0, 1)};
  EXPECT_NEAR(min_field_on_rays(field, std::vector<Ray>{far}, 1.5)[0].value, 1.0, 1e-12);
}

TEST(MinFieldOnRays, HittingRayIsNegative) {
  const AnalyticField<double> field{Sphere{}};
  const Ray r{Vec3(0.2, 0, -3), Vec3(0, 0, 1)};
  const auto m = min_field_on_rays(field, std::vector<Ray>{r}, 1.5);
  EXPECT_NEAR(m[0].value, 0.2 - 1.0, 1e-6);
  EXPECT_THROW(min_field_on_rays(field, std::vector<Ray>{r}, 1.5, 1), DomainError);
}

TEST(MarchingCubes, SphereVerticesOnSurface) {
  const AnalyticField<double> field{Sphere{}};
  const Mesh m = marching_cubes(field, 64, Box{});
  EXPECT_LT(max_radius_error(m, 1.0), 0.01);
  EXPECT_NEAR(m.surface_area(), 4.0 * kPi, 0.05 * 4.0 * kPi);
  EXPECT_NEAR(m.signed_volume(), 4.0 / 3.0 * kPi, 0.05 * 4.0 / 3.0 * kPi);
  // Outward orientation: face normals agree with the radial direction.
  int outward = 0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const auto& t = m.faces[f];
    const Vec3 c = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
    outward += m.face_normal(f).dot(c) > 0.0;
  }
  EXPECT_EQ(outward, static_cast<int>(m.faces.size()));
}

TEST(MarchingCubes, ClosedSurfaceEulerCharacteristicTwo) {
  const AnalyticField<double> field{Ellipsoid{Vec3(0.05, 0, 0), Vec3(1.0, 0.8, 0.6)}};
  const Mesh m = marching_cubes(field, 48, Box{});
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : m.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  for (const auto& [e, count] : edges) EXPECT_EQ(count, 2);  // watertight, manifold edges
  const long chi = static_cast<long>(m.vertices.size()) - static_cast<long>(edges.size()) +
                   static_cast<long>(m.faces.size());
  EXPECT_EQ(chi, 2);
}

TEST(MarchingCubes, TorusHasGenusOne) {
  const AnalyticField<double> field{Torus{}};
  const Mesh m = marching_cubes(field, 64, Box{});
  std::set<std::pair<int, int>> edges;
  for (const auto& t : m.faces) {
    for (int k = 0; k < 3; ++k) edges.insert({std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])});
  }
  EXPECT_EQ(static_cast<long>(m.vertices.size()) - static_cast<long>(edges.size()) + static_cast<long>(m.faces.size()),
            0);
}

TEST(MarchingCubes, RefinementReducesError) {
  const AnalyticField<double> field{Sphere{Vec3(0.03, -0.02, 0.01), 0.9}};
  const auto err = [&](int res) {
    const Mesh m = marching_cubes(field, res, Box{});
    double e = 0.0;
    for (const auto& v : m.vertices) e = std::max(e, std::abs((v - Vec3(0.03, -0.02, 0.01)).norm() - 0.9));
    return e;
  };
  const double coarse = err(24), fine = err(48);
  EXPECT_LT(fine, coarse);
  EXPECT_LT(fine, 0.6 * coarse);
}

TEST(MarchingCubes, Errors) {
  EXPECT_THROW(marching_cubes(ConstantField{}, 32, Box{}), EmptyLevelSet);
  EXPECT_THROW(marching_cubes(ConstantField{-1.0}, 32, Box{}), EmptyLevelSet);
  EXPECT_THROW(marching_cubes(AnalyticField<double>{Sphere{}}, 8, Box{}), DomainError);
}

TEST(MarchingCubes, DeterministicOnNetwork) {
  const SdfNetwork<float> net(NetworkArch{16, 8, 4, 4, 100.0, 0.5}, 5);
  const Mesh a = marching_cubes(net, 24, Box{});
  const Mesh b = marching_cubes(net, 24, Box{});
  ASSERT_EQ(a.vertices.size(), b.vertices.size());
  ASSERT_EQ(a.faces, b.faces);
  for (std::size_t i = 0; i < a.vertices.size(); ++i) EXPECT_EQ(a.vertices[i], b.vertices[i]);
}
