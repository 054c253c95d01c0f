// SPDX-License-Identifier: Apache-2.0
//
// Kolmogorov n-widths, degrees-of-freedom counts and closed-form leading
// terms for the cut-set geometries.
#pragma once

#include "dofkit/error.hpp"
#include "dofkit/geometry.hpp"
#include "dofkit/quadrature.hpp"
#include "dofkit/spectrum.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dofkit {

/// d_n = sqrt(lambda_n).
inline double n_width(const Spectrum &s, std::size_t n) {
  if (n >= s.eigenvalues.size())
    throw std::out_of_range("n_width: index " + std::to_string(n) + " beyond the " +
                            std::to_string(s.eigenvalues.size()) + " computed eigenvalues");
  return std::sqrt(std::max(s.eigenvalues[n], 0.0));
}

inline std::vector<double> n_width_curve(const Spectrum &s) {
  std::vector<double> d(s.eigenvalues.size());
  for (std::size_t n = 0; n < d.size(); ++n)
    d[n] = std::sqrt(std::max(s.eigenvalues[n], 0.0));
  return d;
}

/// min{n : d_n <= eps}, i.e. the number of eigenvalues strictly above eps^2.
inline std::size_t dof_at_accuracy(const Spectrum &s, double eps) {
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("dof_at_accuracy: accuracy must lie in (0, 1)");
  const double level = eps * eps;
  for (std::size_t n = 0; n < s.eigenvalues.size(); ++n)
    if (s.eigenvalues[n] <= level)
      return n;
  if (!s.complete) {
    std::ostringstream msg;
    msg << "dof_at_accuracy: all " << s.eigenvalues.size() << " computed eigenvalues exceed " << level
        << "; request more eigenvalues";
    throw NumericalError(msg.str());
  }
  return s.eigenvalues.size();
}

namespace detail {
inline void require_nonnegative(double v, const char *name, const char *where) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string(where) + ": " + name + " must be nonnegative and finite");
}
} // namespace detail

// ---------------------------------------------------------------------------
// Closed-form leading terms

/// (Omega T / pi) (r Omega) = T r Omega^2 / pi.
inline double dof_circular(double omega, double duration, double radius) {
  detail::require_nonnegative(omega, "Omega", "dof_circular");
  detail::require_nonnegative(duration, "T", "dof_circular");
  detail::require_nonnegative(radius, "r", "dof_circular");
  return duration * radius * omega * omega / std::numbers::pi;
}

/// 4 pi r^2 Omega^3 T / (3 pi^3).
inline double dof_spherical(double omega, double duration, double radius) {
  detail::require_nonnegative(omega, "Omega", "dof_spherical");
  detail::require_nonnegative(duration, "T", "dof_spherical");
  detail::require_nonnegative(radius, "r", "dof_spherical");
  constexpr double pi = std::numbers::pi;
  return 4.0 * pi * radius * radius * omega * omega * omega * duration / (3.0 * pi * pi * pi);
}

/// A Omega^3 T / (3 pi^3) for a surface of revolution of area A.
inline double dof_rotational(double area, double omega, double duration) {
  detail::require_nonnegative(area, "area", "dof_rotational");
  detail::require_nonnegative(omega, "Omega", "dof_rotational");
  detail::require_nonnegative(duration, "T", "dof_rotational");
  constexpr double pi = std::numbers::pi;
  return area * omega * omega * omega * duration / (3.0 * pi * pi * pi);
}

/// Omega T / pi.
inline double time_bandwidth_product(double omega, double duration) {
  detail::require_nonnegative(omega, "Omega", "time_bandwidth_product");
  detail::require_nonnegative(duration, "T", "time_bandwidth_product");
  return omega * duration / std::numbers::pi;
}

/// omega 2 pi r / pi = 2 omega r for a circle of radius r.
inline double space_wavenumber_product(double omega, double radius) {
  detail::require_nonnegative(omega, "omega", "space_wavenumber_product");
  detail::require_nonnegative(radius, "r", "space_wavenumber_product");
  return 2.0 * omega * radius;
}

enum class GeometryKind { circular, spherical, rotational };

inline const char *to_string(GeometryKind g) {
  switch (g) {
  case GeometryKind::circular:
    return "circular";
  case GeometryKind::spherical:
    return "spherical";
  case GeometryKind::rotational:
    return "rotational";
  }
  return "unknown";
}

/// Cut-set geometry for the frequency-integrated calculators: `size` is the
/// radius r for circular and spherical cuts and the surface area for
/// rotational ones.
struct CutGeometry {
  GeometryKind kind = GeometryKind::circular;
  double size = 0.0;

  static CutGeometry circular(double r) { return {GeometryKind::circular, r}; }
  static CutGeometry spherical(double r) { return {GeometryKind::spherical, r}; }
  static CutGeometry rotational(double area) { return {GeometryKind::rotational, area}; }

  /// Spatial degrees of freedom per unit of frequency at frequency omega.
  double spatial_density(double omega) const {
    constexpr double pi = std::numbers::pi;
    switch (kind) {
    case GeometryKind::circular:
      return omega * 2.0 * pi * size / pi;
    case GeometryKind::spherical:
      return omega * omega * 4.0 * pi * size * size / (pi * pi);
    case GeometryKind::rotational:
      return size * omega * omega / (pi * pi);
    }
    throw std::invalid_argument("unknown geometry");
  }

  /// Surface area of the cut boundary (circumference for circles).
  double area() const {
    constexpr double pi = std::numbers::pi;
    switch (kind) {
    case GeometryKind::circular:
      return 2.0 * pi * size;
    case GeometryKind::spherical:
      return 4.0 * pi * size * size;
    case GeometryKind::rotational:
      return size;
    }
    throw std::invalid_argument("unknown geometry");
  }
};

/// Integrates the spatial density over [omega_lo, omega_hi] and multiplies by
/// T / pi. The densities are polynomials of degree <= 2, so 8 nodes are exact.
inline double heuristic_dof(const CutGeometry &g, double omega_lo, double omega_hi, double duration) {
  detail::require_nonnegative(omega_lo, "omega_lo", "heuristic_dof");
  detail::require_nonnegative(omega_hi, "Omega", "heuristic_dof");
  detail::require_nonnegative(duration, "T", "heuristic_dof");
  detail::require_nonnegative(g.size, "size", "heuristic_dof");
  if (omega_hi < omega_lo)
    throw std::invalid_argument("heuristic_dof: empty frequency range");
  if (omega_hi == omega_lo)
    return 0.0;
  const auto rule = gauss_legendre(8, omega_lo, omega_hi);
  return duration / std::numbers::pi * integrate(rule, [&](double w) { return g.spatial_density(w); });
}

inline double heuristic_dof(const CutGeometry &g, double omega, double duration) {
  return heuristic_dof(g, 0.0, omega, duration);
}

/// Closed-form counterpart of heuristic_dof over [0, Omega].
inline double closed_form_dof(const CutGeometry &g, double omega, double duration) {
  switch (g.kind) {
  case GeometryKind::circular:
    return dof_circular(omega, duration, g.size);
  case GeometryKind::spherical:
    return dof_spherical(omega, duration, g.size);
  case GeometryKind::rotational:
    return dof_rotational(g.size, omega, duration);
  }
  throw std::invalid_argument("closed_form_dof: unknown geometry");
}

struct ModulatedDof {
  double leading_term = 0.0;
  double delta = 0.0;         ///< (dw / wc)^2 / 12; 0 for circular cuts
  double bandwidth = 0.0;     ///< dw = w2 - w1
  double carrier = 0.0;       ///< wc = (w1 + w2) / 2
  double density = 0.0;       ///< spatial count at the carrier, A wc^2 / pi^2 (2 r wc for circles)
};

/// Leading term for a signal occupying w1 <= |w| <= w2.
inline ModulatedDof dof_modulated(double duration, double omega_1, double omega_2, const CutGeometry &g) {
  detail::require_nonnegative(duration, "T", "dof_modulated");
  detail::require_nonnegative(g.size, "size", "dof_modulated");
  const ModulatedBand band = build_modulated_band(omega_1, omega_2);
  ModulatedDof out;
  out.bandwidth = band.bandwidth();
  out.carrier = band.carrier();
  const double time_factor = duration * out.bandwidth / std::numbers::pi;
  out.density = g.spatial_density(out.carrier);
  if (g.kind == GeometryKind::circular) {
    out.delta = 0.0;
    out.leading_term = time_factor * out.density;
  } else {
    out.delta = band.delta();
    out.leading_term = time_factor * out.density * (1.0 + out.delta);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

enum class Regime { wideband, large_domain, combined };

inline const char *to_string(Regime r) {
  switch (r) {
  case Regime::wideband:
    return "wideband";
  case Regime::large_domain:
    return "large_domain";
  case Regime::combined:
    return "combined";
  }
  return "unknown";
}

struct DofReport {
  /// Accuracy on the n-width scale; the eigenvalue level is epsilon^2.
  double epsilon = std::numbers::sqrt2 / 2.0;
  std::vector<double> n_width_curve;
  bool has_empirical = false;
  std::size_t dof_empirical = 0;      ///< min{n : d_n <= epsilon}
  std::size_t count_at_epsilon = 0;   ///< #{lambda >= epsilon}, the other convention
  double dof_closed_form = 0.0;
  double relative_gap = 0.0;
  Regime regime = Regime::combined;
};

inline double relative_gap(double empirical, double closed_form) {
  if (closed_form == 0.0)
    return empirical == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (empirical - closed_form) / closed_form;
}

/// Compares the spectrum's degree-of-freedom count to a closed-form value.
inline DofReport empirical_vs_closed_form(const Spectrum &s, double closed_form, double epsilon,
                                          Regime regime) {
  DofReport r;
  r.epsilon = epsilon;
  r.regime = regime;
  r.dof_closed_form = closed_form;
  r.n_width_curve = n_width_curve(s);
  r.dof_empirical = dof_at_accuracy(s, epsilon);
  r.count_at_epsilon = count_at_level(s, epsilon);
  r.has_empirical = true;
  r.relative_gap = relative_gap(static_cast<double>(r.dof_empirical), closed_form);
  return r;
}

inline DofReport closed_form_report(double closed_form, double epsilon, Regime regime) {
  DofReport r;
  r.epsilon = epsilon;
  r.regime = regime;
  r.dof_closed_form = closed_form;
  return r;
}

} // namespace dofkit
