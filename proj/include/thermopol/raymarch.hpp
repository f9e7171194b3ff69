#pragma once

// Batched ray queries against a learned (or analytic) field: sphere tracing
// with bisection on overshoot, and the minimum of f along a ray.

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <vector>

#include "thermopol/scene.hpp"
#include "thermopol/sdf_network.hpp"

namespace thermopol {

struct FieldTraceOptions {
  int max_steps = 128;
  double hit_epsilon = 1e-4;
  double bounding_radius = 1.5;
  int bisection_steps = 20;
  bool compute_normals = false;
};

namespace detail {

template <typename Field>
Points<typename Field::Scalar> gather_points(const std::vector<Ray>& rays, const std::vector<int>& ids,
                                             const std::vector<double>& t) {
  using Scalar = typename Field::Scalar;
  Points<Scalar> pts(3, static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto i = static_cast<std::size_t>(ids[k]);
    pts.col(static_cast<Eigen::Index>(k)) = rays[i].at(t[i]).template cast<Scalar>();
  }
  return pts;
}

}  // namespace detail

/// Sphere-traces every ray against `field` in lock step, one batched field
/// evaluation per step. A sign change between steps is resolved by bisection.
template <typename Field>
std::vector<SurfaceHit> trace_field(const Field& field, const std::vector<Ray>& rays,
                                    const FieldTraceOptions& opts = {}) {
  const std::size_t n = rays.size();
  std::vector<SurfaceHit> out(n);
  std::vector<double> t(n, 0.0), t_far(n, 0.0), t_prev(n, 0.0);
  std::vector<int> active;
  active.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto span = ray_sphere_interval(rays[i], Vec3::Zero(), opts.bounding_radius);
    if (!span || span->second < 0.0) continue;
    t[i] = t_prev[i] = std::max(span->first, 0.0);
    t_far[i] = span->second;
    active.push_back(static_cast<int>(i));
  }

  std::vector<int> bracketed;
  for (int step = 0; step < opts.max_steps && !active.empty(); ++step) {
    const auto f = field.evaluate(detail::gather_points<Field>(rays, active, t));
    std::vector<int> next;
    next.reserve(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto i = static_cast<std::size_t>(active[k]);
      const double d = static_cast<double>(f(static_cast<Eigen::Index>(k)));
      if (!std::isfinite(d)) continue;
      if (std::abs(d) < opts.hit_epsilon) {
        out[i].status = TraceStatus::kHit;
        out[i].distance = t[i];
      } else if (d < 0.0) {
        if (step == 0) {
          // Entered the bounding sphere already inside the surface.
          out[i].status = TraceStatus::kHit;
          out[i].distance = t[i];
        } else {
          bracketed.push_back(static_cast<int>(i));
        }
      } else {
        t_prev[i] = t[i];
        t[i] += d;
        if (t[i] > t_far[i]) continue;
        next.push_back(static_cast<int>(i));
      }
    }
    if (step + 1 == opts.max_steps) {
      for (int i : next) out[static_cast<std::size_t>(i)].status = TraceStatus::kNoConvergence;
    }
    active.swap(next);
  }

  // Bisection on [t_prev, t] where f(t_prev) > 0 > f(t).
  if (!bracketed.empty()) {
    std::vector<double> lo(n), hi(n), mid(n);
    for (int i : bracketed) {
      lo[static_cast<std::size_t>(i)] = t_prev[static_cast<std::size_t>(i)];
      hi[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i)];
    }
    for (int it = 0; it < opts.bisection_steps; ++it) {
      for (int i : bracketed) mid[i] = 0.5 * (lo[i] + hi[i]);
      const auto f = field.evaluate(detail::gather_points<Field>(rays, bracketed, mid));
      for (std::size_t k = 0; k < bracketed.size(); ++k) {
        const auto i = static_cast<std::size_t>(bracketed[k]);
        (f(static_cast<Eigen::Index>(k)) > 0 ? lo[i] : hi[i]) = mid[i];
      }
    }
    for (int i : bracketed) {
      out[i].status = TraceStatus::kHit;
      out[i].distance = 0.5 * (lo[i] + hi[i]);
    }
  }

  std::vector<int> hits;
  for (std::size_t i = 0; i < n; ++i) {
    if (out[i].hit()) {
      out[i].point = rays[i].at(out[i].distance);
      hits.push_back(static_cast<int>(i));
    }
  }
  if (opts.compute_normals && !hits.empty()) {
    std::vector<double> dist(n);
    for (int i : hits) dist[i] = out[i].distance;
    const auto vg = field.evaluate_with_gradient(detail::gather_points<Field>(rays, hits, dist));
    for (std::size_t k = 0; k < hits.size(); ++k) {
      auto& h = out[static_cast<std::size_t>(hits[k])];
      const Vec3 g = vg.gradients.col(static_cast<Eigen::Index>(k)).template cast<double>();
      h.normal = g.norm() > 0.0 ? Vec3(g.normalized()) : Vec3::Zero();
    }
  }
  return out;
}

struct RayMinimum {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  double value = 0.0;
};

/// Minimum of f along each ray: uniform samples over the bounding-sphere chord,
/// then ternary search around the best sample. Rays that miss the bounding
/// sphere use their point of closest approach to the origin.
template <typename Field>
std::vector<RayMinimum> min_field_on_rays(const Field& field, const std::vector<Ray>& rays,
                                          double bounding_radius, int samples = 128,
                                          int refine_steps = 12) {
  if (samples < 2) throw DomainError("need at least two samples per ray");
  using Scalar = typename Field::Scalar;
  const std::size_t n = rays.size();
  std::vector<RayMinimum> out(n);
  std::vector<int> chord;
  std::vector<double> t0(n), t1(n);
  std::vector<int> outside;
  for (std::size_t i = 0; i < n; ++i) {
    const auto span = ray_sphere_interval(rays[i], Vec3::Zero(), bounding_radius);
    if (span && span->second > 0.0) {
      t0[i] = std::max(span->first, 0.0);
      t1[i] = span->second;
      chord.push_back(static_cast<int>(i));
    } else {
      out[i].t = std::max(0.0, -rays[i].origin.dot(rays[i].direction));
      outside.push_back(static_cast<int>(i));
    }
  }

  if (!outside.empty()) {
    std::vector<double> t(n);
    for (int i : outside) t[i] = out[i].t;
    const auto f = field.evaluate(detail::gather_points<Field>(rays, outside, t));
    for (std::size_t k = 0; k < outside.size(); ++k) {
      out[outside[k]].value = static_cast<double>(f(static_cast<Eigen::Index>(k)));
    }
  }

  if (!chord.empty()) {
    const auto m = static_cast<Eigen::Index>(chord.size());
    Points<Scalar> pts(3, m * samples);
    for (Eigen::Index k = 0; k < m; ++k) {
      const auto i = static_cast<std::size_t>(chord[k]);
      for (int s = 0; s < samples; ++s) {
        const double t = t0[i] + (t1[i] - t0[i]) * s / (samples - 1);
        pts.col(k * samples + s) = rays[i].at(t).template cast<Scalar>();
      }
    }
    const auto f = field.evaluate(pts);
    std::vector<double> lo(n), hi(n);
    for (Eigen::Index k = 0; k < m; ++k) {
      const auto i = static_cast<std::size_t>(chord[k]);
      int best = 0;
      for (int s = 1; s < samples; ++s) {
        if (f(k * samples + s) < f(k * samples + best)) best = s;
      }
      const double dt = (t1[i] - t0[i]) / (samples - 1);
      out[i].t = t0[i] + dt * best;
      out[i].value = static_cast<double>(f(k * samples + best));
      lo[i] = std::max(t0[i], out[i].t - dt);
      hi[i] = std::min(t1[i], out[i].t + dt);
    }
    std::vector<double> a(n), b(n);
    for (int it = 0; it < refine_steps; ++it) {
      for (int i : chord) {
        a[i] = lo[i] + (hi[i] - lo[i]) / 3.0;
        b[i] = hi[i] - (hi[i] - lo[i]) / 3.0;
      }
      const auto fa = field.evaluate(detail::gather_points<Field>(rays, chord, a));
      const auto fb = field.evaluate(detail::gather_points<Field>(rays, chord, b));
      for (Eigen::Index k = 0; k < m; ++k) {
        const auto i = static_cast<std::size_t>(chord[k]);
        if (fa(k) < fb(k)) {
          hi[i] = b[i];
        } else {
          lo[i] = a[i];
        }
        const double va = static_cast<double>(fa(k)), vb = static_cast<double>(fb(k));
        if (va < out[i].value) out[i] = {a[i], Vec3::Zero(), va};
        if (vb < out[i].value) out[i] = {b[i], Vec3::Zero(), vb};
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) out[i].point = rays[i].at(out[i].t);
  return out;
}

}  // namespace thermopol
