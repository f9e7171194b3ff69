#pragma once

// Zero level set extraction on a regular grid. Each cube is split into six
// tetrahedra sharing its main diagonal (the Kuhn triangulation), which is
// conforming across neighbouring cubes, so the output is closed wherever the
// level set does not leave the box. Vertices sit on grid or diagonal edges
// and are shared between the triangles that meet there.

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "thermopol/errors.hpp"
#include "thermopol/mesh.hpp"
#include "thermopol/sdf_network.hpp"

namespace thermopol {

/// Field samples on a res^3 lattice spanning `box`, x fastest.
template <typename Field>
std::vector<double> sample_grid(const Field& field, int res, const Box& box) {
  using Scalar = typename Field::Scalar;
  const Vec3 step = (box.hi - box.lo) / (res - 1);
  std::vector<double> values(static_cast<std::size_t>(res) * res * res);
  const Eigen::Index slab = static_cast<Eigen::Index>(res) * res;
  Points<Scalar> pts(3, slab);
  for (int z = 0; z < res; ++z) {
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        pts.col(y * res + x) =
            (box.lo + Vec3(x * step.x(), y * step.y(), z * step.z())).template cast<Scalar>();
      }
    }
    const auto f = field.evaluate(pts);
    for (Eigen::Index i = 0; i < slab; ++i) {
      values[static_cast<std::size_t>(z) * slab + i] = static_cast<double>(f(i));
    }
  }
  return values;
}

inline Mesh marching_cubes_grid(const std::vector<double>& values, int res, const Box& box) {
  if (res < 16) throw DomainError("marching cubes resolution must be at least 16");
  if (values.size() != static_cast<std::size_t>(res) * res * res) {
    throw ShapeMismatch("grid sample count does not match resolution");
  }
  const Vec3 step = (box.hi - box.lo) / (res - 1);
  auto grid_index = [res](int x, int y, int z) {
    return (static_cast<std::int64_t>(z) * res + y) * res + x;
  };
  auto position = [&](std::int64_t idx) {
    const auto x = static_cast<int>(idx % res);
    const auto y = static_cast<int>((idx / res) % res);
    const auto z = static_cast<int>(idx / (static_cast<std::int64_t>(res) * res));
    return Vec3(box.lo + Vec3(x * step.x(), y * step.y(), z * step.z()));
  };

  // Corner c of a cube has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
  static constexpr std::array<std::array<int, 4>, 6> kTets{{
      {0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}}};

  Mesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  const auto total = static_cast<std::uint64_t>(values.size());
  auto vertex_on_edge = [&](std::int64_t a, std::int64_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * total + static_cast<std::uint64_t>(b);
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double fa = values[static_cast<std::size_t>(a)];
    const double fb = values[static_cast<std::size_t>(b)];
    const double t = fa / (fa - fb);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(position(a) + t * (position(b) - position(a)));
    edge_vertex.emplace(key, id);
    return id;
  };

  auto emit = [&](int i0, int i1, int i2, const Vec3& outward) {
    const Vec3& p0 = mesh.vertices[i0];
    const Vec3 n = (mesh.vertices[i1] - p0).cross(mesh.vertices[i2] - p0);
    if (n.dot(outward) < 0.0) std::swap(i1, i2);
    mesh.faces.push_back({i0, i1, i2});
  };

  for (int z = 0; z + 1 < res; ++z) {
    for (int y = 0; y + 1 < res; ++y) {
      for (int x = 0; x + 1 < res; ++x) {
        std::array<std::int64_t, 8> corner{};
        int inside_count = 0;
        for (int c = 0; c < 8; ++c) {
          corner[c] = grid_index(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
          inside_count += values[static_cast<std::size_t>(corner[c])] < 0.0;
        }
        if (inside_count == 0 || inside_count == 8) continue;
        for (const auto& tet : kTets) {
          std::array<std::int64_t, 4> in{}, out{};
          int n_in = 0, n_out = 0;
          for (int v : tet) {
            const std::int64_t g = corner[v];
            if (values[static_cast<std::size_t>(g)] < 0.0) {
              in[n_in++] = g;
            } else {
              out[n_out++] = g;
            }
          }
          if (n_in == 0 || n_out == 0) continue;
          Vec3 c_in = Vec3::Zero(), c_out = Vec3::Zero();
          for (int i = 0; i < n_in; ++i) c_in += position(in[i]) / n_in;
          for (int i = 0; i < n_out; ++i) c_out += position(out[i]) / n_out;
          const Vec3 outward = c_out - c_in;
          if (n_in == 1 || n_out == 1) {
            const bool single_inside = n_in == 1;
            const std::int64_t apex = single_inside ? in[0] : out[0];
            const auto& others = single_inside ? out : in;
            emit(vertex_on_edge(apex, others[0]), vertex_on_edge(apex, others[1]),
                 vertex_on_edge(apex, others[2]), outward);
          } else {
            // Quad through the four crossing edges, in cyclic order.
            const int q0 = vertex_on_edge(in[0], out[0]);
            const int q1 = vertex_on_edge(in[0], out[1]);
            const int q2 = vertex_on_edge(in[1], out[1]);
            const int q3 = vertex_on_edge(in[1], out[0]);
            emit(q0, q1, q2, outward);
            emit(q0, q2, q3, outward);
          }
        }
      }
    }
  }
  if (mesh.faces.empty()) throw EmptyLevelSet("field has no zero crossing inside the box");
  return mesh;
}

template <typename Field>
Mesh marching_cubes(const Field& field, int res, const Box& box = {}) {
  if (res < 16) throw DomainError("marching cubes resolution must be at least 16");
  return marching_cubes_grid(sample_grid(field, res, box), res, box);
}

}  // namespace thermopol
