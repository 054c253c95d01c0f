// SPDX-License-Identifier: Apache-2.0
//
// Convolution kernels h with Fourier transform equal to the indicator of a
// spectral support set, h(u) = (2 pi)^-N * integral over Q of cos(u . v) dv.
#pragma once

#include "dofkit/error.hpp"
#include "dofkit/geometry.hpp"
#include "dofkit/quadrature.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dofkit {

struct KernelOptions {
  /// Largest offset magnitude per axis at which the kernel will be sampled;
  /// the slice quadrature is refined until it is stable at probes reaching
  /// this extent. Empty means 10 on every axis.
  std::vector<double> probe_extent;
  double tolerance = 1e-8;
  std::size_t initial_nodes = 32;
  std::size_t max_nodes = std::size_t{1} << 14;
};

class Kernel {
public:
  enum class Form { closed_form_sinc, sliced_quadrature };

  using Evaluator = std::function<double(std::span<const double>)>;

  Kernel(int dimension, Form form, Evaluator eval, double origin_value, std::vector<double> band_extent,
         std::size_t quadrature_nodes = 0)
      : dimension_(dimension), form_(form), eval_(std::move(eval)), origin_value_(origin_value),
        band_extent_(std::move(band_extent)), quadrature_nodes_(quadrature_nodes) {}

  int dimension() const { return dimension_; }
  Form form() const { return form_; }
  /// h(0) = (2 pi)^-N m(Q).
  double origin_value() const { return origin_value_; }
  /// Largest |v_k| over the spectral support, per axis.
  const std::vector<double> &band_extent() const { return band_extent_; }
  /// Gauss-Legendre nodes used along omega (0 for closed forms).
  std::size_t quadrature_nodes() const { return quadrature_nodes_; }

  double operator()(std::span<const double> u) const {
    if (u.size() != static_cast<std::size_t>(dimension_))
      throw std::invalid_argument("Kernel: offset dimension mismatch");
    return eval_(u);
  }
  double operator()(std::initializer_list<double> u) const {
    return (*this)(std::span<const double>(u.begin(), u.size()));
  }

private:
  int dimension_;
  Form form_;
  Evaluator eval_;
  double origin_value_;
  std::vector<double> band_extent_;
  std::size_t quadrature_nodes_;
};

namespace detail {

constexpr double two_pi = 2.0 * std::numbers::pi;

/// sin(w u) / (pi u), the inverse transform of the indicator of [-w, w].
inline double sine_ratio(double w, double u) {
  const double x = w * u;
  if (std::abs(x) < 1e-6)
    return w / std::numbers::pi * (1.0 - x * x / 6.0);
  return std::sin(x) / (std::numbers::pi * u);
}

/// 2 sin(a v) / v, the integral of cos(v y) over |y| <= a.
inline double slice_factor(double a, double v) {
  const double x = a * v;
  if (std::abs(x) < 1e-6)
    return 2.0 * a * (1.0 - x * x / 6.0);
  return 2.0 * std::sin(x) / v;
}

inline std::vector<double> extents_of(const BoundingBox &bb) {
  std::vector<double> out(bb.size());
  for (std::size_t i = 0; i < bb.size(); ++i)
    out[i] = std::max(std::abs(bb[i].lo), std::abs(bb[i].hi));
  return out;
}

struct SliceTable {
  std::vector<double> nodes, weights;
  std::vector<double> half_widths; // nodes x cross_dimension
  std::size_t cross = 0;

  double evaluate(std::span<const double> u) const {
    double sum = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      double term = weights[q] * std::cos(u[0] * nodes[q]);
      for (std::size_t k = 0; k < cross; ++k)
        term *= slice_factor(half_widths[q * cross + k], u[k + 1]);
      sum += term;
    }
    return 2.0 * sum / std::pow(two_pi, static_cast<double>(cross + 1));
  }
};

inline SliceTable make_slice_table(const OmegaSlicedSet &s, std::size_t n) {
  SliceTable t;
  t.cross = s.cross_dimension;
  const auto rule = gauss_legendre(n, s.omega_min, s.omega_max);
  t.nodes = rule.nodes;
  t.weights = rule.weights;
  t.half_widths.reserve(n * t.cross);
  for (double w : t.nodes) {
    const auto hw = s.half_widths(w);
    t.half_widths.insert(t.half_widths.end(), hw.begin(), hw.end());
  }
  return t;
}

inline Kernel sliced_kernel(const OmegaSlicedSet &s, const BoundingBox &bounds,
                            const KernelOptions &opt) {
  const std::size_t n = s.cross_dimension + 1;
  const double scale = std::pow(two_pi, -static_cast<double>(n));
  if (s.cross_dimension == 0) {
    const double w1 = s.omega_min, w2 = s.omega_max;
    return Kernel(
        1, Kernel::Form::closed_form_sinc,
        [w1, w2](std::span<const double> u) { return sine_ratio(w2, u[0]) - sine_ratio(w1, u[0]); },
        (w2 - w1) / std::numbers::pi, {w2});
  }
  if (s.omega_max <= s.omega_min)
    return Kernel(static_cast<int>(n), Kernel::Form::sliced_quadrature,
                  [](std::span<const double>) { return 0.0; }, 0.0, extents_of(bounds), 0);

  std::vector<double> extent = opt.probe_extent;
  if (extent.empty())
    extent.assign(n, 10.0);
  if (extent.size() != n)
    throw std::invalid_argument("build_kernel: probe_extent dimension mismatch");

  // ten probes spread over the sampled range, the last one at the far corner
  std::vector<std::vector<double>> probes;
  for (int j = 0; j < 10; ++j) {
    std::vector<double> p(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double frac = (j == 9) ? 1.0 : std::fmod(0.1 * (j + 1) * (1.0 + 0.37 * k), 1.0);
      p[k] = ((j + k) % 2 == 0 ? 1.0 : -1.0) * frac * extent[k];
    }
    probes.push_back(std::move(p));
  }

  std::size_t nodes = opt.initial_nodes;
  auto table = std::make_shared<SliceTable>(make_slice_table(s, nodes));
  const double origin = scale * detail::sliced_measure(s, 32);
  const double tol = opt.tolerance * std::max(origin, std::numeric_limits<double>::min());
  for (;;) {
    if (2 * nodes > opt.max_nodes) {
      std::ostringstream msg;
      msg << "build_kernel: slice quadrature did not converge with " << nodes << " nodes";
      throw NumericalError(msg.str());
    }
    auto refined = std::make_shared<SliceTable>(make_slice_table(s, 2 * nodes));
    double change = 0.0;
    for (const auto &p : probes)
      change = std::max(change, std::abs(refined->evaluate(p) - table->evaluate(p)));
    nodes *= 2;
    table = std::move(refined);
    if (change < tol)
      break;
  }
  return Kernel(
      static_cast<int>(n), Kernel::Form::sliced_quadrature,
      [table](std::span<const double> u) { return table->evaluate(u); }, origin,
      extents_of(bounds), nodes);
}

inline Kernel kernel_of(const SupportSet &q, const KernelOptions &opt);

inline Kernel affine_kernel(const detail::AffineNode &a, const KernelOptions &opt) {
  // h_A(u) = |det A| h(A^T u)
  KernelOptions inner_opt = opt;
  if (!opt.probe_extent.empty()) {
    const Eigen::MatrixXd at = a.map.matrix().transpose().cwiseAbs();
    Eigen::VectorXd e(static_cast<Eigen::Index>(opt.probe_extent.size()));
    for (std::size_t i = 0; i < opt.probe_extent.size(); ++i)
      e(static_cast<Eigen::Index>(i)) = opt.probe_extent[i];
    const Eigen::VectorXd inner_e = at * e;
    inner_opt.probe_extent.assign(inner_e.data(), inner_e.data() + inner_e.size());
  }
  auto inner = std::make_shared<Kernel>(kernel_of(a.inner, inner_opt));
  const Eigen::MatrixXd at = a.map.matrix().transpose();
  const double det = std::abs(a.map.determinant());
  const BoundingBox bounds = image_bounds(a.map, a.inner.bounding_box());
  return Kernel(
      inner->dimension(), inner->form(),
      [inner, at, det](std::span<const double> u) {
        const Eigen::Map<const Eigen::VectorXd> v(u.data(), static_cast<Eigen::Index>(u.size()));
        const Eigen::VectorXd w = at * v;
        return det * (*inner)(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
      },
      det * inner->origin_value(), extents_of(bounds), inner->quadrature_nodes());
}

inline Kernel kernel_of(const SupportSet &q, const KernelOptions &opt) {
  if (!q.is_bounded())
    throw std::invalid_argument("build_kernel: unbounded spectral support");
  const int n = q.dimension();
  return std::visit(
      [&](const auto &node) -> Kernel {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, BoxNode>) {
          std::vector<double> w(node.bounds.size());
          for (std::size_t i = 0; i < w.size(); ++i) {
            const auto &iv = node.bounds[i];
            if (std::abs(iv.lo + iv.hi) > 1e-12 * std::max(1.0, iv.hi))
              throw std::invalid_argument(
                  "build_kernel: spectral box must be symmetric about the origin");
            w[i] = iv.hi;
          }
          double origin = 1.0;
          for (double v : w)
            origin *= v / std::numbers::pi;
          return Kernel(
              n, Kernel::Form::closed_form_sinc,
              [w](std::span<const double> u) {
                double h = 1.0;
                for (std::size_t i = 0; i < w.size(); ++i)
                  h *= sine_ratio(w[i], u[i]);
                return h;
              },
              origin, w);
        } else if constexpr (std::is_same_v<T, BallNode>) {
          for (double c : node.center)
            if (c != 0.0)
              throw std::invalid_argument("build_kernel: spectral ball must be centred at the origin");
          const double radius = node.radius;
          std::vector<double> ext(static_cast<std::size_t>(n), radius);
          if (n == 1)
            return Kernel(
                1, Kernel::Form::closed_form_sinc,
                [radius](std::span<const double> u) { return sine_ratio(radius, u[0]); },
                radius / std::numbers::pi, ext);
          if (n == 2)
            return Kernel(
                2, Kernel::Form::closed_form_sinc,
                [radius](std::span<const double> u) {
                  const double s = std::hypot(u[0], u[1]);
                  const double x = radius * s;
                  if (x < 1e-6)
                    return radius * radius / (4.0 * std::numbers::pi) * (1.0 - x * x / 8.0);
                  return radius * std::cyl_bessel_j(1.0, x) / (two_pi * s);
                },
                radius * radius / (4.0 * std::numbers::pi), ext);
          if (n == 3)
            return Kernel(
                3, Kernel::Form::closed_form_sinc,
                [radius](std::span<const double> u) {
                  const double s = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
                  const double x = radius * s;
                  const double c = radius * radius * radius / (6.0 * std::numbers::pi * std::numbers::pi);
                  // sin x - x cos x cancels badly for small x; use its series
                  if (x < 0.1) {
                    const double x2 = x * x;
                    return c * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0 * (1.0 - x2 / 54.0 * (1.0 - x2 / 88.0))));
                  }
                  return (std::sin(x) - x * std::cos(x)) /
                         (2.0 * std::numbers::pi * std::numbers::pi * s * s * s);
                },
                radius * radius * radius / (6.0 * std::numbers::pi * std::numbers::pi), ext);
          throw std::invalid_argument("build_kernel: balls supported up to dimension 3");
        } else if constexpr (std::is_same_v<T, ProductNode>) {
          std::vector<std::shared_ptr<Kernel>> factors;
          std::vector<std::size_t> dims;
          std::vector<double> ext;
          double origin = 1.0;
          std::size_t offset = 0, nodes = 0;
          bool sliced = false;
          for (const auto &f : node.factors) {
            const auto d = static_cast<std::size_t>(f.dimension());
            KernelOptions sub = opt;
            if (!opt.probe_extent.empty())
              sub.probe_extent.assign(opt.probe_extent.begin() + static_cast<std::ptrdiff_t>(offset),
                                      opt.probe_extent.begin() + static_cast<std::ptrdiff_t>(offset + d));
            auto k = std::make_shared<Kernel>(kernel_of(f, sub));
            origin *= k->origin_value();
            ext.insert(ext.end(), k->band_extent().begin(), k->band_extent().end());
            sliced = sliced || k->form() == Kernel::Form::sliced_quadrature;
            nodes = std::max(nodes, k->quadrature_nodes());
            factors.push_back(std::move(k));
            dims.push_back(d);
            offset += d;
          }
          return Kernel(
              n, sliced ? Kernel::Form::sliced_quadrature : Kernel::Form::closed_form_sinc,
              [factors, dims](std::span<const double> u) {
                double h = 1.0;
                std::size_t off = 0;
                for (std::size_t i = 0; i < factors.size(); ++i) {
                  h *= (*factors[i])(u.subspan(off, dims[i]));
                  off += dims[i];
                }
                return h;
              },
              origin, ext, nodes);
        } else if constexpr (std::is_same_v<T, SlicedNode>) {
          return sliced_kernel(node.set, q.bounding_box(), opt);
        } else if constexpr (std::is_same_v<T, AffineNode>) {
          return affine_kernel(node, opt);
        } else {
          throw std::invalid_argument(
              "build_kernel: no kernel for union/intersection spectral sets");
        }
      },
      q.node().value);
}

} // namespace detail

/// Kernel of the band-limiting projection onto the spectral support BQ.
/// Diagonal B keeps closed forms (the scaled set is materialised); other maps
/// evaluate |det B| h(B^T u).
inline Kernel build_kernel(const SupportSet &q, const LinearMap &b, const KernelOptions &opt = {}) {
  return detail::kernel_of(apply_map(b, q), opt);
}

inline Kernel build_kernel(const SupportSet &q, const KernelOptions &opt = {}) {
  return detail::kernel_of(q, opt);
}

} // namespace dofkit
