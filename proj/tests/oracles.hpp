// SPDX-License-Identifier: Apache-2.0
//
// Reference values computed without the library: closed forms, adaptive
// Simpson integration and naive matrix assembly.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

constexpr double pi = std::numbers::pi;

namespace detail {
inline double simpson_step(const std::function<double(double)> &f, double a, double b, double fa, double fm,
                           double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol)
    return left + right + diff / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}
} // namespace detail

/// Adaptive Simpson on [a, b], split into `pieces` panels first.
inline double simpson(const std::function<double(double)> &f, double a, double b, double tol = 1e-12,
                      int pieces = 16) {
  double total = 0.0;
  const double h = (b - a) / pieces;
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + i * h, hi = lo + h;
    const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    total += detail::simpson_step(f, lo, hi, fa, fm, fb, h / 6.0 * (fa + 4 * fm + fb), tol / pieces, 40);
  }
  return total;
}

/// (2 pi)^-1 * integral_{-w}^{w} cos(u v) dv = sin(w u) / (pi u).
inline double sinc_kernel(double w, double u) {
  if (u == 0.0)
    return w / pi;
  return std::sin(w * u) / (pi * u);
}

/// (1 - cos(c W)) / c = 2 sin^2(c W / 2) / c, with its c -> 0 limit.
inline double one_minus_cos_over(double c, double w) {
  if (c == 0.0)
    return 0.0;
  const double h = std::sin(0.5 * c * w);
  return 2.0 * h * h / c;
}

/// Kernel of the planar cone {|omega| <= W, |v| <= r |omega|} in closed form:
/// (2 pi)^-2 (2 / u1) [ (1 - cos((b + a) W)) / (b + a) + (1 - cos((b - a) W)) / (b - a) ],
/// a = u0, b = r u1.
inline double cone_kernel_2d(double w, double r, double u0, double u1) {
  const double norm = 1.0 / (4.0 * pi * pi);
  if (std::abs(u1) < 1e-12) {
    // integral of cos(u0 omega) * 2 r |omega| over [-W, W]
    if (std::abs(u0) < 1e-12)
      return norm * 2.0 * r * w * w;
    const double a = u0;
    return norm * 4.0 * r * (w * std::sin(a * w) / a + (std::cos(a * w) - 1.0) / (a * a));
  }
  const double a = u0, b = r * u1;
  return norm * (2.0 / u1) * (one_minus_cos_over(b + a, w) + one_minus_cos_over(b - a, w));
}

/// Same cone kernel by direct integration over omega of the analytic slice.
inline double cone_kernel_2d_simpson(double w, double r, double u0, double u1) {
  auto slice = [&](double om) {
    const double hw = r * om;
    const double s = std::abs(u1) < 1e-14 ? 2.0 * hw : 2.0 * std::sin(hw * u1) / u1;
    return std::cos(u0 * om) * s;
  };
  return 2.0 * simpson(slice, 0.0, w, 1e-13, 64) / (4.0 * pi * pi);
}

/// 2-D disk kernel R J1(R |u|) / (2 pi |u|) by integrating over the disk in
/// polar form: (2 pi)^-2 * integral_0^R rho * 2 pi J0(rho |u|) d rho, with J0
/// itself from its integral representation.
inline double disk_kernel(double radius, double u) {
  auto j0 = [](double x) { return simpson([x](double t) { return std::cos(x * std::sin(t)); }, 0.0, pi, 1e-13) / pi; };
  return simpson([&](double rho) { return rho * 2.0 * pi * j0(rho * u); }, 0.0, radius, 1e-11, 16) /
         (4.0 * pi * pi);
}

/// Measures of the cut-set spectral supports.
inline double circular_cone_measure(double omega, double r) { return 2.0 * r * omega * omega; }
inline double spherical_cone_measure(double omega, double r) { return 8.0 / 3.0 * omega * omega * omega * r * r; }

/// integral over [0, T]^2 of h(x - y)^2 = integral_{-T}^{T} (T - |u|) h(u)^2 du.
inline double hilbert_schmidt_1d(double duration, const std::function<double(double)> &h) {
  return 2.0 * simpson([&](double u) { return (duration - u) * h(u) * h(u); }, 0.0, duration, 1e-12, 256);
}

/// Naive midpoint Nystrom matrix for P = [lo, hi] and a 1-D kernel.
inline Eigen::MatrixXd nystrom_1d(double lo, double hi, std::size_t n, const std::function<double(double)> &h) {
  const double d = (hi - lo) / static_cast<double>(n);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          d * h((static_cast<double>(i) - static_cast<double>(j)) * d);
  return m;
}

/// Eigenvalues in non-increasing order, via a plain cyclic Jacobi sweep.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q)
        off += a(p, q) * a(p, q);
    if (off < 1e-30)
      break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300)
          continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

/// Singular values of diag(a) * diag(b) are |a_k b_k|; the smallest one.
inline double min_diag_singular(const std::vector<double> &a, const std::vector<double> &b) {
  double m = std::abs(a[0] * b[0]);
  for (std::size_t k = 1; k < a.size(); ++k)
    m = std::min(m, std::abs(a[k] * b[k]));
  return m;
}

/// Seeded generator for property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
};

} // namespace oracle
