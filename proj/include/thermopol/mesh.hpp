#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "thermopol/scene.hpp"

namespace thermopol {

/// Indexed triangle mesh; faces are counter-clockwise seen from outside.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }

  Vec3 face_normal(std::size_t f) const {
    const auto& t = faces[f];
    const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    const double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }

  double face_area(std::size_t f) const {
    const auto& t = faces[f];
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }

  double surface_area() const {
    double a = 0.0;
    for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
    return a;
  }

  /// Signed volume; positive for outward-oriented closed meshes.
  double signed_volume() const {
    double v = 0.0;
    for (const auto& t : faces) {
      v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]])) / 6.0;
    }
    return v;
  }
};

struct Box {
  Vec3 lo = Vec3::Constant(-1.5);
  Vec3 hi = Vec3::Constant(1.5);
};

}  // namespace thermopol
