#pragma once

// Forward polarimetric renderer for analytic scenes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <type_traits>
#include <vector>

#include "thermopol/polcore.hpp"
#include "thermopol/raster.hpp"
#include "thermopol/scene.hpp"

namespace thermopol {

enum class RenderMode { kLwirEmission, kVisibleMixture };

struct RenderJob {
  AnalyticShape shape = Sphere{};
  Dielectric material{1.5, 1.0};
  ThermalState thermal{310.0, 10e-6};
  std::vector<CameraView> views;
  RenderMode mode = RenderMode::kLwirEmission;
  double noise_sigma = 0.0;  // relative to the per-image mean intensity
  std::vector<double> polarizer_angles{0.0, 0.25 * kPi, 0.5 * kPi, 0.75 * kPi};
  double ambient_radiance = 0.0;  // LWIR only: mirror-reflected ambient, off by default
  double env_radiance = 1.0;      // visible mixture environment
  std::uint64_t seed = 0;
  TraceOptions trace{};
};

template <typename T = float>
struct RenderResult {
  PolarimetricImage<T> stokes;  // s0, s1, s2
  PolarimetricImage<T> aolp;
  PolarimetricImage<T> dolp;
  Mask mask;                    // ray hits the object
  Raster<T> gt_normal;          // 3 channels, world frame
  Raster<T> gt_depth;           // camera z
  Raster<T> gt_aolp;            // projected azimuth of the true normal
};

/// Stokes vector leaving a surface point with unit normal `normal`, seen along
/// unit direction `view_dir` (camera to point).
inline Stokes surface_stokes(const RenderJob& job, const CameraView& view, const Vec3& normal,
                             const Vec3& view_dir, double entry_transmittance) {
  const double cos_theta = std::clamp(-normal.dot(view_dir), 0.0, 1.0);
  const double theta = std::min(std::acos(cos_theta), std::nextafter(0.5 * kPi, 0.0));
  double phi = 0.0;
  try {
    phi = projected_azimuth(normal, view);
  } catch (const DegenerateProjection&) {
    // theta ~ 0: no linear polarization to orient
  }
  const double eta = job.material.eta();
  if (job.mode == RenderMode::kLwirEmission) {
    Stokes s = emitted_stokes(theta, phi, eta, job.thermal);
    if (job.ambient_radiance > 0.0) s += specular_stokes(theta, phi, eta, job.ambient_radiance);
    return s;
  }
  return diffuse_stokes(theta, phi, job.material, job.env_radiance, entry_transmittance) +
         specular_stokes(theta, phi, eta, job.env_radiance);
}

/// True where the mirror-reflected environment out-polarizes the diffuse term
/// in visible mixture mode, so the mixture AoLP follows the specular branch.
inline bool specular_dominant(double theta, const Dielectric& material, double env_radiance = 1.0) {
  const FresnelPair r = fresnel_reflectance(theta, material.eta());
  const FresnelPair t = fresnel_transmittance(theta, material.eta());
  const double specular = 0.5 * (r.s - r.p) * env_radiance;
  const double diffuse = material.rho() * hemispherical_transmittance(material.eta()) *
                         0.5 * (t.s - t.p) * env_radiance;
  return specular + diffuse > 0.0;
}

template <typename T>
PolarimetricImage<T> aolp_image(const PolarimetricImage<T>& stokes) {
  PolarimetricImage<T> out{ChannelKind::kAolp,
                           Raster<T>::nan(stokes.width(), stokes.height()),
                           Mask(stokes.width(), stokes.height())};
  for (int y = 0; y < stokes.height(); ++y) {
    for (int x = 0; x < stokes.width(); ++x) {
      const double s1 = stokes.values.at(x, y, 1);
      const double s2 = stokes.values.at(x, y, 2);
      if (!std::isfinite(s1) || !std::isfinite(s2) || (s1 == 0.0 && s2 == 0.0)) continue;
      out.values.at(x, y) = static_cast<T>(aolp(Stokes(1.0, s1, s2, 0.0)));
      out.mask.at(x, y) = 1;
    }
  }
  return out;
}

template <typename T>
PolarimetricImage<T> dolp_image(const PolarimetricImage<T>& stokes) {
  PolarimetricImage<T> out{ChannelKind::kDolp,
                           Raster<T>::nan(stokes.width(), stokes.height()),
                           Mask(stokes.width(), stokes.height())};
  for (int y = 0; y < stokes.height(); ++y) {
    for (int x = 0; x < stokes.width(); ++x) {
      const double s0 = stokes.values.at(x, y, 0);
      if (!(s0 > 0.0)) continue;
      const double d = std::hypot(double(stokes.values.at(x, y, 1)),
                                  double(stokes.values.at(x, y, 2))) / s0;
      out.values.at(x, y) = static_cast<T>(std::min(d, 1.0));
      out.mask.at(x, y) = 1;
    }
  }
  return out;
}

namespace detail {

inline RenderResult<double> render_exact(const RenderJob& job, const CameraView& view) {
  using T = double;
  const int w = view.width();
  const int h = view.height();
  RenderResult<T> out;
  out.stokes = {ChannelKind::kStokes3, Raster<T>::nan(w, h, 3), Mask(w, h)};
  out.mask = Mask(w, h);
  out.gt_normal = Raster<T>::nan(w, h, 3);
  out.gt_depth = Raster<T>::nan(w, h);
  out.gt_aolp = Raster<T>::nan(w, h);
  const double entry = job.mode == RenderMode::kVisibleMixture
                           ? hemispherical_transmittance(job.material.eta())
                           : 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Ray ray = pixel_ray(view, x, y);
      const SurfaceHit hit = intersect(job.shape, ray, job.trace);
      if (!hit.hit()) continue;
      out.mask.at(x, y) = 1;
      out.stokes.mask.at(x, y) = 1;
      const Stokes s = surface_stokes(job, view, hit.normal, ray.direction, entry);
      for (int c = 0; c < 3; ++c) {
        out.stokes.values.at(x, y, c) = static_cast<T>(s[c]);
        out.gt_normal.at(x, y, c) = static_cast<T>(hit.normal[c]);
      }
      out.gt_depth.at(x, y) = static_cast<T>(view.to_camera(hit.point).z());
      try {
        out.gt_aolp.at(x, y) = static_cast<T>(projected_azimuth(hit.normal, view));
      } catch (const DegenerateProjection&) {
      }
    }
  }
  out.aolp = aolp_image(out.stokes);
  out.dolp = dolp_image(out.stokes);
  return out;
}

template <typename T>
PolarimetricImage<T> narrow(const PolarimetricImage<double>& img) {
  return PolarimetricImage<T>{img.kind, img.values.template cast<T>(), img.mask};
}

template <typename T>
RenderResult<T> narrow(const RenderResult<double>& r) {
  RenderResult<T> out;
  out.stokes = narrow<T>(r.stokes);
  out.aolp = narrow<T>(r.aolp);
  out.dolp = narrow<T>(r.dolp);
  out.mask = r.mask;
  out.gt_normal = r.gt_normal.template cast<T>();
  out.gt_depth = r.gt_depth.template cast<T>();
  out.gt_aolp = r.gt_aolp.template cast<T>();
  return out;
}

}  // namespace detail

/// Renders one view. All radiometry is evaluated in double; T selects the
/// storage precision of the returned images.
template <typename T = float>
RenderResult<T> render_stokes(const RenderJob& job, const CameraView& view) {
  if constexpr (std::is_same_v<T, double>) {
    return detail::render_exact(job, view);
  } else {
    return detail::narrow<T>(detail::render_exact(job, view));
  }
}

/// Ideal linear analyzer at angle alpha: I = (s0 + s1 cos 2a + s2 sin 2a) / 2.
template <typename T>
std::vector<Raster<T>> polarizer_images(const PolarimetricImage<T>& stokes,
                                        const std::vector<double>& angles) {
  std::vector<Raster<T>> out;
  out.reserve(angles.size());
  for (double alpha : angles) {
    const double c = std::cos(2.0 * alpha);
    const double s = std::sin(2.0 * alpha);
    Raster<T> img = Raster<T>::nan(stokes.width(), stokes.height());
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
      const double s0 = stokes.values.data[3 * p];
      const double s1 = stokes.values.data[3 * p + 1];
      const double s2 = stokes.values.data[3 * p + 2];
      if (!std::isfinite(s0)) continue;
      img.data[p] = static_cast<T>(0.5 * (s0 + s1 * c + s2 * s));
    }
    out.push_back(std::move(img));
  }
  return out;
}

/// Stokes from the four standard analyzer angles (0, 45, 90, 135 degrees).
template <typename T>
PolarimetricImage<T> estimate_stokes(const Raster<T>& i0, const Raster<T>& i45,
                                     const Raster<T>& i90, const Raster<T>& i135) {
  if (!i0.same_size(i45) || !i0.same_size(i90) || !i0.same_size(i135)) {
    throw ShapeMismatch("polarizer images differ in size");
  }
  PolarimetricImage<T> out{ChannelKind::kStokes3, Raster<T>::nan(i0.width, i0.height, 3),
                           Mask(i0.width, i0.height)};
  for (std::size_t p = 0; p < i0.pixel_count(); ++p) {
    const double a = i0.data[p];
    const double b = i45.data[p];
    const double c = i90.data[p];
    const double d = i135.data[p];
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c) || !std::isfinite(d)) continue;
    out.values.data[3 * p] = static_cast<T>(a + c);
    out.values.data[3 * p + 1] = static_cast<T>(a - c);
    out.values.data[3 * p + 2] = static_cast<T>(b - d);
    out.mask.data[p] = 1;
  }
  return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double unit_uniform(std::uint64_t bits) {
  // (0, 1]
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

/// Standard normal deviate addressed by (seed, stream, index); independent of
/// evaluation order.
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t key =
      detail::splitmix64(seed ^ detail::splitmix64(stream * 0x632be59bd9b4e019ULL + index));
  const double u1 = detail::unit_uniform(detail::splitmix64(key));
  const double u2 = detail::unit_uniform(detail::splitmix64(key ^ 0xd1b54a32d192ed03ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

/// I.i.d. Gaussian noise with standard deviation sigma * mean(image); results
/// clamped at zero. `stream` separates independent image sets under one seed.
template <typename T>
std::vector<Raster<T>> add_noise(const std::vector<Raster<T>>& images, double sigma,
                                 std::uint64_t seed, std::uint64_t stream = 0) {
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  std::vector<Raster<T>> out = images;
  if (sigma == 0.0) return out;
  for (std::size_t k = 0; k < out.size(); ++k) {
    Raster<T>& img = out[k];
    double sum = 0.0;
    std::size_t count = 0;
    for (T v : img.data) {
      if (std::isfinite(v)) {
        sum += v;
        ++count;
      }
    }
    if (count == 0) continue;
    const double scale = sigma * sum / static_cast<double>(count);
    const std::uint64_t image_stream = stream * 1024 + k;
    for (std::size_t p = 0; p < img.data.size(); ++p) {
      if (!std::isfinite(img.data[p])) continue;
      const double noisy = img.data[p] + scale * counter_normal(seed, image_stream, p);
      img.data[p] = static_cast<T>(std::max(noisy, 0.0));
    }
  }
  return out;
}

/// One simulated acquisition: analyzer images, optional noise, Stokes estimate.
template <typename T = float>
struct Capture {
  RenderResult<T> render;
  std::vector<Raster<T>> intensities;  // one per polarizer angle, after noise
  PolarimetricImage<T> stokes;         // estimated from the intensities
  PolarimetricImage<T> aolp;
  PolarimetricImage<T> dolp;
};

namespace detail {

inline std::optional<std::size_t> find_angle(const std::vector<double>& angles, double target) {
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (std::abs(angle_diff_pi(angles[i], target)) < 1e-9) return i;
  }
  return std::nullopt;
}

}  // namespace detail

template <typename T = float>
Capture<T> capture_view(const RenderJob& job, std::size_t view_index) {
  Capture<T> cap;
  const CameraView& view = job.views.at(view_index);
  // The estimation path runs in double regardless of the output type.
  RenderResult<double> exact = render_stokes<double>(job, view);
  std::vector<Raster<double>> intensities = polarizer_images(exact.stokes, job.polarizer_angles);
  intensities = add_noise(intensities, job.noise_sigma, job.seed, view_index);

  const auto i0 = detail::find_angle(job.polarizer_angles, 0.0);
  const auto i45 = detail::find_angle(job.polarizer_angles, 0.25 * kPi);
  const auto i90 = detail::find_angle(job.polarizer_angles, 0.5 * kPi);
  const auto i135 = detail::find_angle(job.polarizer_angles, 0.75 * kPi);
  PolarimetricImage<double> estimated;
  if (i0 && i45 && i90 && i135) {
    estimated = estimate_stokes(intensities[*i0], intensities[*i45], intensities[*i90],
                                intensities[*i135]);
  } else if (job.noise_sigma == 0.0) {
    estimated = exact.stokes;
  } else {
    throw DomainError("noisy capture requires analyzer angles 0, 45, 90 and 135 degrees");
  }

  cap.render = detail::narrow<T>(exact);
  for (const auto& img : intensities) cap.intensities.push_back(img.template cast<T>());
  cap.stokes = detail::narrow<T>(estimated);
  cap.aolp = detail::narrow<T>(aolp_image(estimated));
  cap.dolp = detail::narrow<T>(dolp_image(estimated));
  return cap;
}

}  // namespace thermopol
