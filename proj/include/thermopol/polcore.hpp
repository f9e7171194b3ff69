#pragma once

// Stokes/Mueller calculus for dielectric surfaces: Fresnel reflection and
// transmission, depolarizing diffuse scattering, and thermal emission tied to
// reflectance through Kirchhoff's law.
//
// Angle conventions (all radians):
//   theta  zenith angle between surface normal and the reverse viewing ray
//   phi    projected azimuth of the normal, measured in the image plane from
//          the vertical image axis, in [0, pi)
// Image-frame Stokes vectors use the vertical image axis as the 0-degree
// reference, so the AoLP of a p-polarized (in-plane-of-incidence) wave equals
// phi. The surface frame used by the Fresnel matrices has its first axis along
// the s-polarization direction, i.e. perpendicular to the projected normal;
// `image_from_surface` performs that change of frame.

#include <Eigen/Core>
#include <cmath>
#include <numbers>

#include "thermopol/errors.hpp"

namespace thermopol {

using Stokes = Eigen::Vector4d;
using Mueller = Eigen::Matrix4d;

inline constexpr double kPi = std::numbers::pi;

namespace codata {
inline constexpr double kPlanck = 6.62607015e-34;      // J s
inline constexpr double kSpeedOfLight = 299792458.0;   // m / s
inline constexpr double kBoltzmann = 1.380649e-23;     // J / K
}  // namespace codata

/// True when s0 >= 0 and the polarized part does not exceed s0 (with slack).
inline bool is_physical(const Stokes& s, double slack = 1e-9) {
  return s[0] >= -slack && s.tail<3>().norm() <= s[0] + slack;
}

class Dielectric {
 public:
  explicit Dielectric(double eta, double rho = 1.0) : eta_(eta), rho_(rho) {
    if (!(eta >= 1.0) || !std::isfinite(eta)) {
      throw DomainError("refractive index must be >= 1 (object in air)");
    }
    if (!(rho >= 0.0 && rho <= 1.0)) {
      throw DomainError("depolarization proportion must lie in [0, 1]");
    }
  }
  double eta() const { return eta_; }
  double rho() const { return rho_; }

 private:
  double eta_;
  double rho_;
};

class ThermalState {
 public:
  ThermalState(double temperature_k, double wavelength_m)
      : temperature_(temperature_k), wavelength_(wavelength_m) {
    if (!(temperature_k > 0.0) || !(wavelength_m > 0.0)) {
      throw DomainError("temperature and wavelength must be positive");
    }
  }
  double temperature() const { return temperature_; }
  double wavelength() const { return wavelength_; }

 private:
  double temperature_;
  double wavelength_;
};

// ---------------------------------------------------------------------------

/// Rotation of the linear Stokes components by 2*phi.
inline Mueller rotation_mueller(double phi) {
  const double c = std::cos(2.0 * phi);
  const double s = std::sin(2.0 * phi);
  Mueller m = Mueller::Identity();
  m(1, 1) = c;
  m(1, 2) = -s;
  m(2, 1) = s;
  m(2, 2) = c;
  return m;
}

/// Surface frame (first axis = s direction) to image frame (0 deg = vertical
/// image axis) for a normal whose projected azimuth is phi.
inline Mueller image_from_surface(double phi) {
  return rotation_mueller(phi + 0.5 * kPi);
}

struct FresnelPair {
  double s;
  double p;
};

namespace detail {

inline void check_incidence(double theta, double eta) {
  if (!std::isfinite(theta) || theta < 0.0 || theta >= 0.5 * kPi) {
    throw DomainError("zenith angle must lie in [0, pi/2)");
  }
  if (!(eta > 0.0)) {
    throw DomainError("refractive index must be positive");
  }
  if (std::sin(theta) / eta > 1.0) {
    throw DomainError("total internal reflection regime");
  }
}

inline double refraction_cos(double theta, double eta) {
  const double st = std::sin(theta) / eta;
  return std::sqrt(1.0 - st * st);
}

}  // namespace detail

inline FresnelPair fresnel_reflectance(double theta, double eta) {
  detail::check_incidence(theta, eta);
  const double ci = std::cos(theta);
  const double ct = detail::refraction_cos(theta, eta);
  const double rs = (ci - eta * ct) / (ci + eta * ct);
  const double rp = (ct - eta * ci) / (ct + eta * ci);
  return {rs * rs, rp * rp};
}

/// Intensity transmittance coefficients as used by the transmission matrix.
inline FresnelPair fresnel_transmittance(double theta, double eta) {
  detail::check_incidence(theta, eta);
  const double ci = std::cos(theta);
  const double ct = detail::refraction_cos(theta, eta);
  const double ts = 2.0 * ci / (ci + eta * ct);
  const double tp = 2.0 * ci / (ct + eta * ci);
  return {ts * ts, tp * tp};
}

inline double brewster_angle(double eta) { return std::atan(eta); }

namespace detail {

// Shared block structure of the reflection and transmission matrices.
// delta is 0 or pi for a real refractive index, so sin(delta) vanishes.
inline Mueller fresnel_block(const FresnelPair& f, double cos_delta) {
  const double plus = 0.5 * (f.s + f.p);
  const double minus = 0.5 * (f.s - f.p);
  const double cross = std::sqrt(f.s * f.p);
  Mueller m = Mueller::Zero();
  m(0, 0) = plus;
  m(0, 1) = minus;
  m(1, 0) = minus;
  m(1, 1) = plus;
  m(2, 2) = cross * cos_delta;
  m(3, 3) = cross * cos_delta;
  return m;
}

}  // namespace detail

inline Mueller specular_mueller(double theta, double eta) {
  const FresnelPair r = fresnel_reflectance(theta, eta);
  const double cos_delta = theta < brewster_angle(eta) ? -1.0 : 1.0;
  return detail::fresnel_block(r, cos_delta);
}

inline Mueller transmission_mueller(double theta, double eta) {
  return detail::fresnel_block(fresnel_transmittance(theta, eta), 1.0);
}

inline Mueller depolarization_mueller(double rho) {
  Mueller m = Mueller::Zero();
  m(0, 0) = rho;
  return m;
}

/// Cosine-weighted hemispherical average of the entry transmittance t+.
/// Under a uniform unpolarized environment of radiance L the irradiance that
/// survives entry into the surface is L times this factor.
inline double hemispherical_transmittance(double eta, int intervals = 2048) {
  // Simpson on [0, pi/2) of 2 t+(x) cos x sin x; the integrand vanishes at pi/2.
  const double upper = 0.5 * kPi;
  const double h = upper / intervals;
  auto integrand = [eta](double x) {
    if (x >= 0.5 * kPi) return 0.0;
    const FresnelPair t = fresnel_transmittance(x, eta);
    return (t.s + t.p) * std::cos(x) * std::sin(x);
  };
  double acc = integrand(0.0) + integrand(upper);
  for (int i = 1; i < intervals; ++i) {
    acc += (i % 2 ? 4.0 : 2.0) * integrand(i * h);
  }
  return acc * h / 3.0;
}

/// Diffuse (subsurface) component for a uniform unpolarized environment.
/// `entry_transmittance` may carry a cached `hemispherical_transmittance`.
inline Stokes diffuse_stokes(double theta, double phi, const Dielectric& material,
                             double env_radiance, double entry_transmittance = -1.0) {
  if (!(env_radiance >= 0.0)) {
    throw DomainError("environment radiance must be non-negative");
  }
  if (entry_transmittance < 0.0) {
    entry_transmittance = hemispherical_transmittance(material.eta());
  }
  const double irradiance = env_radiance * entry_transmittance;
  const Stokes incident(irradiance, 0.0, 0.0, 0.0);
  const Stokes scattered = depolarization_mueller(material.rho()) * incident;
  return image_from_surface(phi) * transmission_mueller(theta, material.eta()) * scattered;
}

/// Mirror reflection of a uniform unpolarized environment.
inline Stokes specular_stokes(double theta, double phi, double eta, double env_radiance) {
  const Stokes incident(env_radiance, 0.0, 0.0, 0.0);
  return image_from_surface(phi) * specular_mueller(theta, eta) * incident;
}

struct Emissivity {
  double s;
  double p;
  double plus() const { return 0.5 * (s + p); }
  double minus() const { return 0.5 * (s - p); }
};

/// Kirchhoff's law for an opaque body: emissivity = 1 - reflectance, written
/// as (1 - r)(1 + r) so nothing cancels near grazing where r -> 1.
inline Emissivity emissivity(double theta, double eta) {
  detail::check_incidence(theta, eta);
  const double ci = std::cos(theta);
  const double ct = detail::refraction_cos(theta, eta);
  const double num = 4.0 * eta * ci * ct;
  const double ds = ci + eta * ct, dp = ct + eta * ci;
  return {num / (ds * ds), num / (dp * dp)};
}

inline Mueller emission_mueller(double theta, double eta) {
  const Emissivity e = emissivity(theta, eta);
  Mueller m = Mueller::Zero();
  m(0, 0) = e.plus();
  m(1, 0) = e.minus();
  return m;
}

/// Planck spectral radiance [W m^-3 sr^-1].
inline double planck_radiance(const ThermalState& state) {
  using namespace codata;
  const double lambda = state.wavelength();
  const double x = kPlanck * kSpeedOfLight / (lambda * kBoltzmann * state.temperature());
  if (x > 700.0) return 0.0;
  const double prefactor =
      2.0 * kPlanck * kSpeedOfLight * kSpeedOfLight / std::pow(lambda, 5);
  return prefactor / std::expm1(x);
}

inline Stokes emitted_stokes(double theta, double phi, double eta, const ThermalState& state) {
  const Stokes blackbody(planck_radiance(state), 0.0, 0.0, 0.0);
  return image_from_surface(phi) * emission_mueller(theta, eta) * blackbody;
}

inline double dolp(const Stokes& s) {
  if (!(s[0] > 0.0)) throw DomainError("DoLP requires s0 > 0");
  return std::hypot(s[1], s[2]) / s[0];
}

/// Angle of linear polarization in [0, pi).
inline double aolp(const Stokes& s) {
  if (s[1] == 0.0 && s[2] == 0.0) throw UndefinedAolp();
  double a = 0.5 * std::atan2(s[2], s[1]);
  if (a < 0.0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a + 0.0;
}

/// Wraps an angle into [0, pi).
inline double wrap_pi(double a) {
  a = std::fmod(a, kPi);
  if (a < 0.0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a + 0.0;
}

/// Signed difference a - b folded into [-pi/2, pi/2).
inline double angle_diff_pi(double a, double b) {
  double d = std::fmod(a - b, kPi);
  if (d < -0.5 * kPi) d += kPi;
  if (d >= 0.5 * kPi) d -= kPi;
  return d;
}

/// DoLP of thermal emission as a function of zenith angle, evaluated through
/// the emission Mueller pipeline (independent of temperature and azimuth).
inline double dolp_closed_form(double theta, double eta) {
  const Stokes s = emission_mueller(theta, eta) * Stokes(1.0, 0.0, 0.0, 0.0);
  return std::hypot(s[1], s[2]) / s[0];
}

/// Supremum of the emission DoLP over [0, pi/2), attained in the grazing limit.
inline double max_emission_dolp(double eta) { return (eta - 1.0 / eta) / (eta + 1.0 / eta); }

/// Bisection inverse of `dolp_closed_form` on [0, pi/2).
inline double zenith_from_dolp(double d, double eta, double tol = 1e-10) {
  if (!(eta >= 1.0)) throw DomainError("refractive index must be >= 1");
  if (!(d >= 0.0)) throw NoSolution("DoLP must be non-negative");
  if (d == 0.0) return 0.0;
  double lo = 0.0;
  double hi = std::nextafter(0.5 * kPi, 0.0);
  if (d >= dolp_closed_form(hi, eta)) {
    throw NoSolution("DoLP exceeds the maximum reachable for this refractive index");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (dolp_closed_form(mid, eta) < d) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace thermopol
