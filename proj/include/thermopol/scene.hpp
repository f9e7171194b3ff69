#pragma once

// Analytic shapes, pinhole cameras and ray casting against exact SDFs.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <variant>
#include <vector>

#include "thermopol/errors.hpp"
#include "thermopol/polcore.hpp"

namespace thermopol {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Intrinsics {
  double fx = 160.0;
  double fy = 160.0;
  double cx = 64.0;
  double cy = 64.0;
  int width = 128;
  int height = 128;
};

/// Pinhole camera; x_cam = R * x_world + t. Pixel (i, j) has its center at
/// continuous coordinates (i, j).
class CameraView {
 public:
  CameraView(const Intrinsics& k, const Mat3& rotation, const Vec3& translation)
      : k_(k), rotation_(rotation), translation_(translation) {
    if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw DomainError("focal lengths must be positive");
    if (k.width <= 0 || k.height <= 0) throw DomainError("image size must be positive");
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-10 ||
        std::abs(rotation.determinant() - 1.0) > 1e-10) {
      throw DomainError("camera rotation must be orthonormal with det +1");
    }
  }

  const Intrinsics& intrinsics() const { return k_; }
  double fx() const { return k_.fx; }
  double fy() const { return k_.fy; }
  double cx() const { return k_.cx; }
  double cy() const { return k_.cy; }
  int width() const { return k_.width; }
  int height() const { return k_.height; }
  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 r1() const { return rotation_.row(0).transpose(); }
  Vec3 r2() const { return rotation_.row(1).transpose(); }
  Vec3 r3() const { return rotation_.row(2).transpose(); }
  Vec3 center() const { return -rotation_.transpose() * translation_; }

  Vec3 to_camera(const Vec3& x) const { return rotation_ * x + translation_; }

  /// Continuous pixel coordinates; nullopt behind the camera.
  std::optional<Eigen::Vector2d> project(const Vec3& x) const {
    const Vec3 c = to_camera(x);
    if (!(c.z() > 0.0)) return std::nullopt;
    return Eigen::Vector2d(k_.fx * c.x() / c.z() + k_.cx, k_.fy * c.y() / c.z() + k_.cy);
  }

 private:
  Intrinsics k_;
  Mat3 rotation_;
  Vec3 translation_;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit

  Vec3 at(double t) const { return origin + t * direction; }
};

// ---------------------------------------------------------------------------
// Shapes

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;

  double sdf(const Vec3& p) const { return (p - center).norm() - radius; }
  Vec3 gradient(const Vec3& p) const {
    const Vec3 d = p - center;
    const double n = d.norm();
    return n > 0.0 ? Vec3(d / n) : Vec3::UnitZ();
  }
};

/// Scaled-sphere bound: (|q / a| - 1) * min(a) is 1-Lipschitz, exact on the zero set.
struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Vec3 semi_axes = Vec3::Ones();

  double sdf(const Vec3& p) const {
    const Vec3 q = (p - center).cwiseQuotient(semi_axes);
    return (q.norm() - 1.0) * semi_axes.minCoeff();
  }
  Vec3 gradient(const Vec3& p) const {
    const Vec3 q = (p - center).cwiseQuotient(semi_axes);
    const double n = q.norm();
    if (n == 0.0) return Vec3::UnitZ();
    return semi_axes.minCoeff() * q.cwiseQuotient(semi_axes) / n;
  }
};

/// Torus around the z axis through `center`.
struct Torus {
  Vec3 center = Vec3::Zero();
  double major_radius = 0.7;
  double minor_radius = 0.25;

  double sdf(const Vec3& p) const {
    const Vec3 d = p - center;
    const double ring = std::hypot(d.x(), d.y()) - major_radius;
    return std::hypot(ring, d.z()) - minor_radius;
  }
  Vec3 gradient(const Vec3& p) const {
    const Vec3 d = p - center;
    const double rho = std::hypot(d.x(), d.y());
    const double ring = rho - major_radius;
    const double q = std::hypot(ring, d.z());
    if (q == 0.0) return Vec3::UnitZ();
    const Vec3 radial = rho > 0.0 ? Vec3(d.x() / rho, d.y() / rho, 0.0) : Vec3::UnitX();
    return (ring / q) * radial + Vec3(0.0, 0.0, d.z() / q);
  }
};

/// Polynomial smooth minimum of several spheres.
struct SmoothUnion {
  std::vector<Sphere> spheres;
  double blend = 0.2;

  double sdf(const Vec3& p) const { return eval(p).first; }
  Vec3 gradient(const Vec3& p) const { return eval(p).second; }

 private:
  std::pair<double, Vec3> eval(const Vec3& p) const {
    double value = spheres.front().sdf(p);
    Vec3 grad = spheres.front().gradient(p);
    for (std::size_t i = 1; i < spheres.size(); ++i) {
      const double b = spheres[i].sdf(p);
      const Vec3 gb = spheres[i].gradient(p);
      const double h = std::max(blend - std::abs(value - b), 0.0) / blend;
      // weight 1 - h/2 on the smaller argument, h/2 on the larger
      const bool a_smaller = value < b;
      const double w_small = 1.0 - 0.5 * h;
      const Vec3 g_small = a_smaller ? grad : gb;
      const Vec3 g_large = a_smaller ? gb : grad;
      value = std::min(value, b) - h * h * blend * 0.25;
      grad = w_small * g_small + (1.0 - w_small) * g_large;
    }
    return {value, grad};
  }
};

using AnalyticShape = std::variant<Sphere, Ellipsoid, Torus, SmoothUnion>;

inline double shape_sdf(const AnalyticShape& shape, const Vec3& p) {
  return std::visit([&](const auto& s) { return s.sdf(p); }, shape);
}

inline Vec3 shape_gradient(const AnalyticShape& shape, const Vec3& p) {
  return std::visit([&](const auto& s) { return s.gradient(p); }, shape);
}

// ---------------------------------------------------------------------------
// Cameras and rays

/// Cameras on a circle around the world z axis, all looking at `look_at`.
inline std::vector<CameraView> turntable_poses(int n_views, double radius, double elevation,
                                               const Vec3& look_at,
                                               const Intrinsics& intrinsics = {}) {
  if (n_views < 2) throw DomainError("turntable needs at least two views");
  if (!(radius > 0.0)) throw DomainError("turntable radius must be positive");
  if (!(std::abs(elevation) < 0.5 * kPi)) throw DomainError("elevation must lie in (-pi/2, pi/2)");
  std::vector<CameraView> views;
  views.reserve(static_cast<std::size_t>(n_views));
  const Vec3 up = Vec3::UnitZ();
  for (int i = 0; i < n_views; ++i) {
    const double azimuth = 2.0 * kPi * i / n_views;
    const Vec3 offset(std::cos(elevation) * std::cos(azimuth),
                      std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    const Vec3 center = look_at + radius * offset;
    const Vec3 forward = (look_at - center).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    // Re-orthonormalize to round-off.
    const Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
    views.emplace_back(intrinsics, r, -r * center);
  }
  return views;
}

inline Ray pixel_ray(const CameraView& view, double u, double v) {
  if (!(u >= 0.0 && u < view.width() && v >= 0.0 && v < view.height())) {
    throw DomainError("pixel outside the image");
  }
  const Vec3 d_cam((u - view.cx()) / view.fx(), (v - view.cy()) / view.fy(), 1.0);
  return {view.center(), (view.rotation().transpose() * d_cam).normalized()};
}

/// Ray/sphere intersection interval; nullopt when the line misses the sphere.
inline std::optional<std::pair<double, double>> ray_sphere_interval(const Ray& ray,
                                                                    const Vec3& center,
                                                                    double radius) {
  const Vec3 oc = ray.origin - center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  return std::make_pair(-b - s, -b + s);
}

struct TraceOptions {
  int max_steps = 512;
  double epsilon = 1e-7;
  double bounding_radius = 3.0;
};

enum class TraceStatus { kHit, kMiss, kNoConvergence };

struct SurfaceHit {
  TraceStatus status = TraceStatus::kMiss;
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  Vec3 normal = Vec3::Zero();

  bool hit() const { return status == TraceStatus::kHit; }
};

/// Sphere tracing against an exact (or bounded) analytic SDF.
inline SurfaceHit intersect(const AnalyticShape& shape, const Ray& ray,
                            const TraceOptions& opts = {}) {
  SurfaceHit out;
  const auto span = ray_sphere_interval(ray, Vec3::Zero(), opts.bounding_radius);
  if (!span || span->second < 0.0) return out;
  double t = std::max(span->first, 0.0);
  for (int step = 0; step < opts.max_steps; ++step) {
    const Vec3 p = ray.at(t);
    const double d = shape_sdf(shape, p);
    if (std::abs(d) < opts.epsilon) {
      out.status = TraceStatus::kHit;
      out.point = p;
      out.distance = t;
      Vec3 n = shape_gradient(shape, p).normalized();
      if (n.dot(ray.direction) > 0.0) n = -n;
      out.normal = n;
      return out;
    }
    t += d;
    if (t > span->second) return out;
  }
  out.status = TraceStatus::kNoConvergence;
  return out;
}

/// Azimuth of the projected normal from the vertical image axis, in [0, pi).
inline double projected_azimuth(const Vec3& normal, const CameraView& view) {
  const double a = view.r1().dot(normal);
  const double b = view.r2().dot(normal);
  if (std::hypot(a, b) < 1e-9) throw DegenerateProjection("normal parallel to viewing direction");
  return wrap_pi(std::atan2(a, b));
}

}  // namespace thermopol
