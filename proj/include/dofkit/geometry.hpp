// SPDX-License-Identifier: Apache-2.0
//
// Support sets in R^N for the time/band-limiting operator: boxes, balls,
// products, omega-sliced spectral sets (the cone-shaped cut-set supports),
// linear images, unions and intersections. All sets are immutable values
// sharing their node trees.
#pragma once

#include "dofkit/error.hpp"
#include "dofkit/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dofkit {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

using BoundingBox = std::vector<Interval>;

/// Lebesgue measure together with an absolute error estimate.
struct Measure {
  double value = 0.0;
  double error = 0.0;
  bool exact = true;
};

// ---------------------------------------------------------------------------
// LinearMap

class LinearMap {
public:
  explicit LinearMap(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0)
      throw std::invalid_argument("LinearMap: matrix must be square and non-empty");
    if (!matrix_.allFinite())
      throw std::invalid_argument("LinearMap: matrix has non-finite entries");
    determinant_ = matrix_.determinant();
    const double scale = std::pow(std::max(matrix_.cwiseAbs().maxCoeff(), 1e-300),
                                  static_cast<double>(matrix_.rows()));
    if (!(std::abs(determinant_) > 1e-13 * scale))
      throw std::invalid_argument("LinearMap: singular map (determinant " +
                                  std::to_string(determinant_) + ")");
    inverse_ = matrix_.inverse();
  }

  static LinearMap identity(int n) { return LinearMap(Eigen::MatrixXd::Identity(n, n)); }

  static LinearMap diagonal(std::span<const double> entries) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(entries.size()),
                                              static_cast<Eigen::Index>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = entries[i];
    return LinearMap(std::move(m));
  }
  static LinearMap diagonal(std::initializer_list<double> entries) {
    return diagonal(std::span<const double>(entries.begin(), entries.size()));
  }

  int dimension() const { return static_cast<int>(matrix_.rows()); }
  const Eigen::MatrixXd &matrix() const { return matrix_; }
  const Eigen::MatrixXd &inverse() const { return inverse_; }
  double determinant() const { return determinant_; }

  bool is_diagonal() const { return matrix_.isDiagonal(0.0); }
  bool is_identity() const { return matrix_.isIdentity(0.0); }

  std::vector<double> diagonal_entries() const {
    std::vector<double> d(static_cast<std::size_t>(dimension()));
    for (int i = 0; i < dimension(); ++i)
      d[static_cast<std::size_t>(i)] = matrix_(i, i);
    return d;
  }

  LinearMap transpose() const { return LinearMap(matrix_.transpose()); }
  LinearMap operator*(const LinearMap &rhs) const { return LinearMap(matrix_ * rhs.matrix_); }

private:
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd inverse_;
  double determinant_ = 0.0;
};

// ---------------------------------------------------------------------------
// Omega-sliced spectral sets

/// A spectral set described slice by slice along the temporal frequency
/// axis (coordinate 0). At |omega| in [omega_min, omega_max] the slice is the
/// centred box with the given half-widths in the remaining N-1 coordinates.
/// Slices at omega and -omega coincide.
struct OmegaSlicedSet {
  double omega_min = 0.0;
  double omega_max = 0.0;
  std::size_t cross_dimension = 0;
  std::function<std::vector<double>(double)> half_widths;

  /// Cone with half-widths slope_k * |omega|, optionally with a spectral hole
  /// |omega| < omega_min (modulated signals).
  static OmegaSlicedSet cone(double omega_max, std::vector<double> slopes, double omega_min = 0.0) {
    OmegaSlicedSet s;
    s.omega_min = omega_min;
    s.omega_max = omega_max;
    s.cross_dimension = slopes.size();
    s.half_widths = [slopes = std::move(slopes)](double w) {
      std::vector<double> hw(slopes.size());
      for (std::size_t k = 0; k < slopes.size(); ++k)
        hw[k] = slopes[k] * std::abs(w);
      return hw;
    };
    return s;
  }

  double slice_measure(double omega) const {
    double m = 1.0;
    for (double hw : half_widths(omega))
      m *= 2.0 * hw;
    return m;
  }
};

class SupportSet;

namespace detail {
struct BoxNode {
  BoundingBox bounds;
};
struct BallNode {
  std::vector<double> center;
  double radius = 0.0;
};
struct ProductNode {
  std::vector<SupportSet> factors;
};
struct SlicedNode {
  OmegaSlicedSet set;
  std::vector<double> max_half_widths;
};
struct AffineNode;
struct UnionNode {
  std::vector<SupportSet> parts;
};
struct IntersectionNode {
  std::vector<SupportSet> parts;
};
struct Node;
} // namespace detail

// ---------------------------------------------------------------------------
// SupportSet

class SupportSet {
public:
  enum class Kind { box, ball, product, omega_sliced, affine_image, set_union, set_intersection };

  static SupportSet box(BoundingBox bounds);
  static SupportSet box(std::span<const double> lo, std::span<const double> hi);
  /// The origin-centred box with the given half-widths.
  static SupportSet centered_box(std::span<const double> half_widths);
  static SupportSet centered_box(std::initializer_list<double> half_widths) {
    return centered_box(std::span<const double>(half_widths.begin(), half_widths.size()));
  }
  static SupportSet ball(std::vector<double> center, double radius);
  static SupportSet product(std::vector<SupportSet> factors);
  static SupportSet omega_sliced(OmegaSlicedSet set);
  static SupportSet set_union(std::vector<SupportSet> parts);
  static SupportSet set_intersection(std::vector<SupportSet> parts);

  Kind kind() const;
  int dimension() const { return dimension_; }
  bool contains(std::span<const double> x) const;
  const BoundingBox &bounding_box() const { return bounds_; }
  bool is_bounded() const;

  const detail::Node &node() const { return *node_; }

private:
  SupportSet(std::shared_ptr<const detail::Node> node, int dimension, BoundingBox bounds)
      : node_(std::move(node)), dimension_(dimension), bounds_(std::move(bounds)) {}

  friend SupportSet apply_map(const LinearMap &map, const SupportSet &set);

  std::shared_ptr<const detail::Node> node_;
  int dimension_ = 0;
  BoundingBox bounds_;
};

namespace detail {
struct AffineNode {
  LinearMap map;
  SupportSet inner;
};
struct Node {
  std::variant<BoxNode, BallNode, ProductNode, SlicedNode, AffineNode, UnionNode, IntersectionNode>
      value;
};

inline BoundingBox image_bounds(const LinearMap &map, const BoundingBox &box) {
  const int n = map.dimension();
  BoundingBox out(static_cast<std::size_t>(n),
                  Interval{std::numeric_limits<double>::infinity(),
                           -std::numeric_limits<double>::infinity()});
  // each image coordinate is linear, so its range is attained at corners;
  // sum per-column extremes instead of enumerating 2^N corners
  for (int r = 0; r < n; ++r) {
    double lo = 0.0, hi = 0.0;
    for (int c = 0; c < n; ++c) {
      const double a = map.matrix()(r, c);
      const double p = a * box[static_cast<std::size_t>(c)].lo;
      const double q = a * box[static_cast<std::size_t>(c)].hi;
      lo += (a == 0.0) ? 0.0 : std::min(p, q);
      hi += (a == 0.0) ? 0.0 : std::max(p, q);
    }
    out[static_cast<std::size_t>(r)] = Interval{lo, hi};
  }
  return out;
}
} // namespace detail

inline SupportSet SupportSet::box(BoundingBox bounds) {
  if (bounds.empty())
    throw std::invalid_argument("box: dimension must be at least 1");
  for (const auto &iv : bounds)
    if (std::isnan(iv.lo) || std::isnan(iv.hi) || iv.hi < iv.lo)
      throw std::invalid_argument("box: each interval needs lo <= hi");
  const int n = static_cast<int>(bounds.size());
  auto node = std::make_shared<detail::Node>(detail::Node{detail::BoxNode{bounds}});
  return SupportSet(std::move(node), n, std::move(bounds));
}

inline SupportSet SupportSet::box(std::span<const double> lo, std::span<const double> hi) {
  if (lo.size() != hi.size())
    throw std::invalid_argument("box: lo/hi dimension mismatch");
  BoundingBox b(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i)
    b[i] = Interval{lo[i], hi[i]};
  return box(std::move(b));
}

inline SupportSet SupportSet::centered_box(std::span<const double> half_widths) {
  BoundingBox b(half_widths.size());
  for (std::size_t i = 0; i < half_widths.size(); ++i) {
    if (!(half_widths[i] >= 0.0))
      throw std::invalid_argument("centered_box: half-widths must be nonnegative");
    b[i] = Interval{-half_widths[i], half_widths[i]};
  }
  return box(std::move(b));
}

inline SupportSet SupportSet::ball(std::vector<double> center, double radius) {
  if (center.empty())
    throw std::invalid_argument("ball: dimension must be at least 1");
  if (!(radius >= 0.0))
    throw std::invalid_argument("ball: radius must be nonnegative");
  BoundingBox b(center.size());
  for (std::size_t i = 0; i < center.size(); ++i)
    b[i] = Interval{center[i] - radius, center[i] + radius};
  const int n = static_cast<int>(center.size());
  auto node = std::make_shared<detail::Node>(detail::Node{detail::BallNode{std::move(center), radius}});
  return SupportSet(std::move(node), n, std::move(b));
}

inline SupportSet SupportSet::product(std::vector<SupportSet> factors) {
  if (factors.empty())
    throw std::invalid_argument("product: need at least one factor");
  BoundingBox b;
  int n = 0;
  for (const auto &f : factors) {
    n += f.dimension();
    b.insert(b.end(), f.bounding_box().begin(), f.bounding_box().end());
  }
  auto node = std::make_shared<detail::Node>(detail::Node{detail::ProductNode{std::move(factors)}});
  return SupportSet(std::move(node), n, std::move(b));
}

inline SupportSet SupportSet::omega_sliced(OmegaSlicedSet set) {
  if (!(set.omega_max >= 0.0) || !(set.omega_min >= 0.0) || set.omega_min > set.omega_max)
    throw std::invalid_argument("omega_sliced: need 0 <= omega_min <= omega_max");
  if (!std::isfinite(set.omega_max))
    throw std::invalid_argument("omega_sliced: omega_max must be finite");
  if (set.cross_dimension > 0 && !set.half_widths)
    throw std::invalid_argument("omega_sliced: missing cross-section");
  std::vector<double> max_hw(set.cross_dimension, 0.0);
  if (set.cross_dimension > 0) {
    constexpr int samples = 256;
    for (int i = 0; i <= samples; ++i) {
      const double w = set.omega_min + (set.omega_max - set.omega_min) * i / samples;
      const auto hw = set.half_widths(w);
      if (hw.size() != set.cross_dimension)
        throw std::invalid_argument("omega_sliced: cross-section dimension mismatch");
      for (std::size_t k = 0; k < hw.size(); ++k) {
        if (!(hw[k] >= 0.0))
          throw std::invalid_argument("omega_sliced: negative half-width");
        max_hw[k] = std::max(max_hw[k], hw[k]);
      }
    }
  }
  BoundingBox b;
  b.push_back(Interval{-set.omega_max, set.omega_max});
  for (double hw : max_hw)
    b.push_back(Interval{-hw, hw});
  const int n = static_cast<int>(set.cross_dimension) + 1;
  auto node = std::make_shared<detail::Node>(
      detail::Node{detail::SlicedNode{std::move(set), std::move(max_hw)}});
  return SupportSet(std::move(node), n, std::move(b));
}

inline SupportSet SupportSet::set_union(std::vector<SupportSet> parts) {
  if (parts.empty())
    throw std::invalid_argument("set_union: need at least one part");
  const int n = parts.front().dimension();
  BoundingBox b = parts.front().bounding_box();
  for (const auto &p : parts) {
    if (p.dimension() != n)
      throw std::invalid_argument("set_union: dimension mismatch");
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i].lo = std::min(b[i].lo, p.bounding_box()[i].lo);
      b[i].hi = std::max(b[i].hi, p.bounding_box()[i].hi);
    }
  }
  auto node = std::make_shared<detail::Node>(detail::Node{detail::UnionNode{std::move(parts)}});
  return SupportSet(std::move(node), n, std::move(b));
}

inline SupportSet SupportSet::set_intersection(std::vector<SupportSet> parts) {
  if (parts.empty())
    throw std::invalid_argument("set_intersection: need at least one part");
  const int n = parts.front().dimension();
  BoundingBox b = parts.front().bounding_box();
  for (const auto &p : parts) {
    if (p.dimension() != n)
      throw std::invalid_argument("set_intersection: dimension mismatch");
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i].lo = std::max(b[i].lo, p.bounding_box()[i].lo);
      b[i].hi = std::min(b[i].hi, p.bounding_box()[i].hi);
    }
  }
  // an empty intersection collapses to a degenerate box at the lower corner
  for (auto &iv : b)
    if (iv.hi < iv.lo)
      iv.hi = iv.lo;
  auto node =
      std::make_shared<detail::Node>(detail::Node{detail::IntersectionNode{std::move(parts)}});
  return SupportSet(std::move(node), n, std::move(b));
}

inline SupportSet::Kind SupportSet::kind() const {
  return static_cast<Kind>(node_->value.index());
}

inline bool SupportSet::is_bounded() const {
  return std::all_of(bounds_.begin(), bounds_.end(), [](const Interval &iv) {
    return std::isfinite(iv.lo) && std::isfinite(iv.hi);
  });
}

inline bool SupportSet::contains(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(dimension_))
    throw std::invalid_argument("contains: point dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!bounds_[i].contains(x[i]))
      return false;
  return std::visit(
      [&](const auto &n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, detail::BoxNode>) {
          return true; // bounding box test above is exact
        } else if constexpr (std::is_same_v<T, detail::BallNode>) {
          double d2 = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i)
            d2 += (x[i] - n.center[i]) * (x[i] - n.center[i]);
          return d2 <= n.radius * n.radius;
        } else if constexpr (std::is_same_v<T, detail::ProductNode>) {
          std::size_t offset = 0;
          for (const auto &f : n.factors) {
            const auto d = static_cast<std::size_t>(f.dimension());
            if (!f.contains(x.subspan(offset, d)))
              return false;
            offset += d;
          }
          return true;
        } else if constexpr (std::is_same_v<T, detail::SlicedNode>) {
          const double w = std::abs(x[0]);
          if (w < n.set.omega_min || w > n.set.omega_max)
            return false;
          if (n.set.cross_dimension == 0)
            return true;
          const auto hw = n.set.half_widths(w);
          for (std::size_t k = 0; k < hw.size(); ++k)
            if (std::abs(x[k + 1]) > hw[k])
              return false;
          return true;
        } else if constexpr (std::is_same_v<T, detail::AffineNode>) {
          const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
          const Eigen::VectorXd y = n.map.inverse() * v;
          return n.inner.contains(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
        } else if constexpr (std::is_same_v<T, detail::UnionNode>) {
          return std::any_of(n.parts.begin(), n.parts.end(),
                             [&](const SupportSet &p) { return p.contains(x); });
        } else {
          return std::all_of(n.parts.begin(), n.parts.end(),
                             [&](const SupportSet &p) { return p.contains(x); });
        }
      },
      node_->value);
}

// ---------------------------------------------------------------------------
// apply_map

/// The image {A x : x in set}. Diagonal maps of boxes, omega-sliced sets and
/// products, and scalar maps of balls, stay in closed form; other
/// combinations become affine_image nodes.
inline SupportSet apply_map(const LinearMap &map, const SupportSet &set) {
  if (map.dimension() != set.dimension())
    throw std::invalid_argument("apply_map: dimension mismatch (map " +
                                std::to_string(map.dimension()) + ", set " +
                                std::to_string(set.dimension()) + ")");
  if (map.is_identity())
    return set;
  const bool diagonal = map.is_diagonal();
  const auto d = map.diagonal_entries();

  if (diagonal) {
    if (const auto *b = std::get_if<detail::BoxNode>(&set.node().value)) {
      BoundingBox out(b->bounds.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double p = d[i] * b->bounds[i].lo, q = d[i] * b->bounds[i].hi;
        out[i] = Interval{std::min(p, q), std::max(p, q)};
      }
      return SupportSet::box(std::move(out));
    }
    if (const auto *s = std::get_if<detail::SlicedNode>(&set.node().value)) {
      const double a0 = std::abs(d[0]);
      OmegaSlicedSet out;
      out.omega_min = a0 * s->set.omega_min;
      out.omega_max = a0 * s->set.omega_max;
      out.cross_dimension = s->set.cross_dimension;
      if (out.cross_dimension > 0) {
        std::vector<double> scales(d.begin() + 1, d.end());
        for (auto &v : scales)
          v = std::abs(v);
        out.half_widths = [inner = s->set.half_widths, scales, a0](double w) {
          auto hw = inner(w / a0);
          for (std::size_t k = 0; k < hw.size(); ++k)
            hw[k] *= scales[k];
          return hw;
        };
      }
      return SupportSet::omega_sliced(std::move(out));
    }
    if (const auto *p = std::get_if<detail::ProductNode>(&set.node().value)) {
      std::vector<SupportSet> factors;
      std::size_t offset = 0;
      for (const auto &f : p->factors) {
        const auto k = static_cast<std::size_t>(f.dimension());
        factors.push_back(apply_map(
            LinearMap::diagonal(std::span<const double>(d).subspan(offset, k)), f));
        offset += k;
      }
      return SupportSet::product(std::move(factors));
    }
    if (const auto *b = std::get_if<detail::BallNode>(&set.node().value)) {
      const bool scalar = std::all_of(d.begin(), d.end(), [&](double v) { return v == d[0]; });
      if (scalar) {
        std::vector<double> c = b->center;
        for (auto &v : c)
          v *= d[0];
        return SupportSet::ball(std::move(c), std::abs(d[0]) * b->radius);
      }
    }
  }
  if (const auto *a = std::get_if<detail::AffineNode>(&set.node().value))
    return apply_map(map * a->map, a->inner);

  BoundingBox bounds = detail::image_bounds(map, set.bounding_box());
  auto node = std::make_shared<detail::Node>(detail::Node{detail::AffineNode{map, set}});
  return SupportSet(std::move(node), set.dimension(), std::move(bounds));
}

// ---------------------------------------------------------------------------
// measure

namespace detail {

inline double unit_ball_volume(int n) {
  return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

inline double sliced_measure(const OmegaSlicedSet &s, std::size_t nodes) {
  if (s.omega_max <= s.omega_min)
    return 0.0;
  if (s.cross_dimension == 0)
    return 2.0 * (s.omega_max - s.omega_min);
  const auto rule = gauss_legendre(nodes, s.omega_min, s.omega_max);
  return 2.0 * integrate(rule, [&](double w) { return s.slice_measure(w); });
}

/// Midpoint-lattice point counting at three resolutions, extrapolated with
/// the observed convergence order.
inline Measure grid_count_measure(const SupportSet &set) {
  const auto &bb = set.bounding_box();
  const int n = set.dimension();
  double volume = 1.0;
  for (const auto &iv : bb)
    volume *= iv.length();
  if (volume == 0.0)
    return Measure{0.0, 0.0, true};

  const double finest_total = 4.0e6;
  const auto base = static_cast<std::size_t>(
      std::max(2.0, std::floor(std::pow(finest_total, 1.0 / n) / 4.0)));

  auto count_at = [&](std::size_t per_axis) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
    std::vector<double> x(static_cast<std::size_t>(n));
    std::size_t inside = 0;
    for (;;) {
      for (int k = 0; k < n; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        x[kk] = bb[kk].lo + (static_cast<double>(idx[kk]) + 0.5) * bb[kk].length() /
                                static_cast<double>(per_axis);
      }
      if (set.contains(x))
        ++inside;
      int k = n - 1;
      while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == per_axis)
        idx[static_cast<std::size_t>(k--)] = 0;
      if (k < 0)
        break;
    }
    return volume * static_cast<double>(inside) / std::pow(static_cast<double>(per_axis), n);
  };

  const double m1 = count_at(base), m2 = count_at(2 * base), m4 = count_at(4 * base);
  const double d1 = m2 - m1, d2 = m4 - m2;
  const double floor_err = 1e-12 * volume;
  if (std::abs(d2) <= floor_err)
    return Measure{m4, std::max(std::abs(d2), floor_err), false};
  if (std::abs(d2) >= std::abs(d1) && std::abs(d2) > 1e-2 * std::max(std::abs(m4), floor_err)) {
    std::ostringstream msg;
    msg << "measure: grid refinement did not converge (levels " << base << "," << 2 * base << ","
        << 4 * base << " per axis gave " << m1 << ", " << m2 << ", " << m4 << ")";
    throw NumericalError(msg.str());
  }
  double order = 1.0;
  if (std::abs(d1) > 0.0 && std::abs(d2) < std::abs(d1))
    order = std::clamp(std::log2(std::abs(d1 / d2)), 1.0, 3.0);
  const double correction = d2 / (std::pow(2.0, order) - 1.0);
  return Measure{m4 + correction, std::abs(correction) + std::abs(d2), false};
}

inline bool boxes_disjoint(const BoundingBox &a, const BoundingBox &b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].hi <= b[i].lo || b[i].hi <= a[i].lo)
      return true;
  return false;
}

} // namespace detail

/// Lebesgue measure. Exact for boxes, balls, products and linear images of
/// those; Gauss-Legendre over slices for omega-sliced sets; lattice counting
/// with Richardson extrapolation for unions and intersections.
inline Measure measure(const SupportSet &set) {
  if (!set.is_bounded())
    throw std::invalid_argument("measure: unbounded set");
  return std::visit(
      [&](const auto &n) -> Measure {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, detail::BoxNode>) {
          double m = 1.0;
          for (const auto &iv : n.bounds)
            m *= iv.length();
          return Measure{m, 0.0, true};
        } else if constexpr (std::is_same_v<T, detail::BallNode>) {
          return Measure{detail::unit_ball_volume(set.dimension()) *
                             std::pow(n.radius, set.dimension()),
                         0.0, true};
        } else if constexpr (std::is_same_v<T, detail::ProductNode>) {
          Measure out{1.0, 0.0, true};
          for (const auto &f : n.factors) {
            const Measure m = measure(f);
            out.error = out.error * m.value + out.value * m.error + out.error * m.error;
            out.value *= m.value;
            out.exact = out.exact && m.exact;
          }
          return out;
        } else if constexpr (std::is_same_v<T, detail::SlicedNode>) {
          const double coarse = detail::sliced_measure(n.set, 16);
          const double fine = detail::sliced_measure(n.set, 32);
          return Measure{fine, std::abs(fine - coarse) + 1e-15 * std::abs(fine), false};
        } else if constexpr (std::is_same_v<T, detail::AffineNode>) {
          const Measure inner = measure(n.inner);
          const double s = std::abs(n.map.determinant());
          return Measure{s * inner.value, s * inner.error, inner.exact};
        } else if constexpr (std::is_same_v<T, detail::UnionNode>) {
          bool pairwise_disjoint = true;
          for (std::size_t i = 0; i < n.parts.size() && pairwise_disjoint; ++i)
            for (std::size_t j = i + 1; j < n.parts.size(); ++j)
              if (!detail::boxes_disjoint(n.parts[i].bounding_box(), n.parts[j].bounding_box())) {
                pairwise_disjoint = false;
                break;
              }
          if (pairwise_disjoint) {
            Measure out{0.0, 0.0, true};
            for (const auto &p : n.parts) {
              const Measure m = measure(p);
              out.value += m.value;
              out.error += m.error;
              out.exact = out.exact && m.exact;
            }
            return out;
          }
          return detail::grid_count_measure(set);
        } else {
          return detail::grid_count_measure(set);
        }
      },
      set.node().value);
}

// ---------------------------------------------------------------------------
// Cut-set geometries

/// Time/angle support P and spectral support Q of a field on a cut-set.
struct CutSets {
  SupportSet P;
  SupportSet Q;
};

namespace detail {
inline void require_positive(double v, const char *name, const char *where) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string(where) + ": parameter " + name +
                                " must be positive and finite");
}
} // namespace detail

/// Circular cut-set of radius r (normalized by the speed of light):
/// P = [-T/2, T/2] x [-pi, pi] in (t, phi), Q = {(omega, w) : |omega| <= Omega,
/// |w| <= r |omega|}.
inline CutSets build_circular_cut_sets(double omega, double duration, double radius) {
  detail::require_positive(omega, "Omega", "build_circular_cut_sets");
  detail::require_positive(duration, "T", "build_circular_cut_sets");
  detail::require_positive(radius, "r", "build_circular_cut_sets");
  constexpr double pi = std::numbers::pi;
  return CutSets{SupportSet::box(BoundingBox{{-duration / 2, duration / 2}, {-pi, pi}}),
                 SupportSet::omega_sliced(OmegaSlicedSet::cone(omega, {radius}))};
}

/// Spherical cut-set: P = [-T/2, T/2] x [-pi, pi] x [-1, 1] (equal-area
/// angular chart of total solid angle 4 pi), Q = {|omega| <= Omega,
/// |w_1|, |w_2| <= r |omega|}.
inline CutSets build_spherical_cut_sets(double omega, double duration, double radius) {
  detail::require_positive(omega, "Omega", "build_spherical_cut_sets");
  detail::require_positive(duration, "T", "build_spherical_cut_sets");
  detail::require_positive(radius, "r", "build_spherical_cut_sets");
  constexpr double pi = std::numbers::pi;
  return CutSets{
      SupportSet::box(BoundingBox{{-duration / 2, duration / 2}, {-pi, pi}, {-1.0, 1.0}}),
      SupportSet::omega_sliced(OmegaSlicedSet::cone(omega, {radius, radius}))};
}

/// Real modulated spectrum {omega : omega_1 <= |omega| <= omega_2}.
struct ModulatedBand {
  SupportSet set;
  double omega_1 = 0.0;
  double omega_2 = 0.0;

  double bandwidth() const { return omega_2 - omega_1; }
  /// Carrier taken as the midpoint of the band.
  double carrier() const { return 0.5 * (omega_1 + omega_2); }
  /// Relative excess of (w2^3 - w1^3)/3 over carrier^2 * bandwidth.
  double delta() const {
    const double ratio = bandwidth() / carrier();
    return ratio * ratio / 12.0;
  }
};

inline ModulatedBand build_modulated_band(double omega_1, double omega_2) {
  detail::require_positive(omega_1, "omega_1", "build_modulated_band");
  if (!(omega_2 > omega_1) || !std::isfinite(omega_2))
    throw std::invalid_argument("build_modulated_band: need 0 < omega_1 < omega_2");
  OmegaSlicedSet band;
  band.omega_min = omega_1;
  band.omega_max = omega_2;
  return ModulatedBand{SupportSet::omega_sliced(std::move(band)), omega_1, omega_2};
}

/// Circular cut-set carrying a modulated signal: the cone of the circular
/// geometry restricted to omega_1 <= |omega| <= omega_2.
inline CutSets build_modulated_circular_cut_sets(double duration, double omega_1, double omega_2,
                                                 double radius) {
  detail::require_positive(duration, "T", "build_modulated_circular_cut_sets");
  detail::require_positive(radius, "r", "build_modulated_circular_cut_sets");
  const ModulatedBand band = build_modulated_band(omega_1, omega_2);
  constexpr double pi = std::numbers::pi;
  return CutSets{SupportSet::box(BoundingBox{{-duration / 2, duration / 2}, {-pi, pi}}),
                 SupportSet::omega_sliced(OmegaSlicedSet::cone(omega_2, {radius}, omega_1))};
}

// ---------------------------------------------------------------------------
// Rotationally symmetric domains

/// A surface of revolution about the z axis, described by its half meridian
/// (r(s), z(s)), s in [0, 1], in the half plane r >= 0. The closed meridian
/// is the half meridian together with its mirror image across the axis.
class RotationalDomain {
public:
  struct Point {
    double r = 0.0;
    double z = 0.0;
  };

  static RotationalDomain sphere(double radius) {
    if (!(radius >= 0.0))
      throw std::invalid_argument("sphere: radius must be nonnegative");
    return spheroid(radius, radius);
  }

  /// Spheroid with equatorial radius a and polar semi-axis c.
  static RotationalDomain spheroid(double a, double c) {
    if (!(a >= 0.0) || !(c >= 0.0))
      throw std::invalid_argument("spheroid: semi-axes must be nonnegative");
    constexpr double pi = std::numbers::pi;
    RotationalDomain d;
    d.curve_ = [a, c](double s) { return Point{a * std::sin(pi * s), -c * std::cos(pi * s)}; };
    d.tangent_ = [a, c](double s) {
      return Point{a * pi * std::cos(pi * s), c * pi * std::sin(pi * s)};
    };
    return d;
  }

  /// Closed cylinder of radius r and height h, caps included.
  static RotationalDomain cylinder(double radius, double height) {
    if (!(radius >= 0.0) || !(height >= 0.0))
      throw std::invalid_argument("cylinder: radius and height must be nonnegative");
    return polyline({{0.0, -height / 2}, {radius, -height / 2}, {radius, height / 2},
                     {0.0, height / 2}});
  }

  static RotationalDomain polyline(std::vector<Point> vertices) {
    if (vertices.size() < 2)
      throw std::invalid_argument("polyline meridian needs at least two vertices");
    RotationalDomain d;
    d.vertices_ = std::move(vertices);
    return d;
  }

  /// Half-meridian vertices (exact for polylines, 512 samples otherwise).
  std::vector<Point> sample(std::size_t segments = 512) const {
    if (!vertices_.empty())
      return vertices_;
    std::vector<Point> pts(segments + 1);
    for (std::size_t i = 0; i <= segments; ++i)
      pts[i] = curve_(static_cast<double>(i) / static_cast<double>(segments));
    return pts;
  }

  /// Length of the closed meridian (twice the half meridian).
  double meridian_length() const {
    if (!vertices_.empty()) {
      double len = 0.0;
      for (std::size_t i = 1; i < vertices_.size(); ++i)
        len += std::hypot(vertices_[i].r - vertices_[i - 1].r, vertices_[i].z - vertices_[i - 1].z);
      return 2.0 * len;
    }
    const auto rule = composite_gauss_legendre(16, 64, 0.0, 1.0);
    return 2.0 * integrate(rule, [&](double s) {
             const Point t = tangent_(s);
             return std::hypot(t.r, t.z);
           });
  }

  /// Largest r(z) on the meridian at height z (0 outside the z range).
  double radius_at(double z) const {
    const auto pts = sample();
    double best = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const Point &p = pts[i - 1], &q = pts[i];
      const double lo = std::min(p.z, q.z), hi = std::max(p.z, q.z);
      if (z < lo || z > hi)
        continue;
      const double t = (hi == lo) ? 1.0 : (z - p.z) / (q.z - p.z);
      best = std::max(best, (hi == lo) ? std::max(p.r, q.r) : p.r + t * (q.r - p.r));
    }
    return best;
  }

  bool is_polyline() const { return !vertices_.empty(); }
  Point point(double s) const { return curve_(s); }
  Point tangent(double s) const { return tangent_(s); }

private:
  std::vector<Point> vertices_;
  std::function<Point(double)> curve_;
  std::function<Point(double)> tangent_;
};

namespace detail {
inline bool segments_cross(RotationalDomain::Point a, RotationalDomain::Point b,
                           RotationalDomain::Point c, RotationalDomain::Point d) {
  auto orient = [](RotationalDomain::Point p, RotationalDomain::Point q, RotationalDomain::Point s) {
    const double v = (q.r - p.r) * (s.z - p.z) - (q.z - p.z) * (s.r - p.r);
    const double scale = 1e-12 * (std::abs(q.r - p.r) + std::abs(q.z - p.z)) *
                         (std::abs(s.r - p.r) + std::abs(s.z - p.z));
    return (v > scale) - (v < -scale);
  };
  auto on_segment = [](RotationalDomain::Point p, RotationalDomain::Point q, RotationalDomain::Point s) {
    return std::min(p.r, q.r) <= s.r && s.r <= std::max(p.r, q.r) && std::min(p.z, q.z) <= s.z &&
           s.z <= std::max(p.z, q.z);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0)
    return true;
  if (o1 == 0 && on_segment(a, b, c))
    return true;
  if (o2 == 0 && on_segment(a, b, d))
    return true;
  if (o3 == 0 && on_segment(c, d, a))
    return true;
  if (o4 == 0 && on_segment(c, d, b))
    return true;
  return false;
}
} // namespace detail

/// Area of the surface of revolution, 2 pi * integral of r ds along the half
/// meridian. Rejects meridians with r < 0 or self-intersections.
inline double surface_area(const RotationalDomain &dom) {
  const auto pts = dom.sample();
  for (const auto &p : pts)
    if (p.r < -1e-14)
      throw std::invalid_argument("surface_area: meridian leaves the half plane r >= 0");
  // non-adjacent segments must not touch; zero-length segments are skipped
  std::vector<std::pair<RotationalDomain::Point, RotationalDomain::Point>> segs;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].r != pts[i - 1].r || pts[i].z != pts[i - 1].z)
      segs.emplace_back(pts[i - 1], pts[i]);
  for (std::size_t i = 0; i < segs.size(); ++i)
    for (std::size_t j = i + 2; j < segs.size(); ++j)
      if (detail::segments_cross(segs[i].first, segs[i].second, segs[j].first, segs[j].second))
        throw std::invalid_argument("surface_area: self-intersecting meridian");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (dom.is_polyline()) {
    double area = 0.0;
    for (const auto &[p, q] : segs)
      area += std::numbers::pi * (p.r + q.r) * std::hypot(q.r - p.r, q.z - p.z);
    return area;
  }
  const auto rule = composite_gauss_legendre(16, 64, 0.0, 1.0);
  return two_pi * integrate(rule, [&](double s) {
           const auto p = dom.point(s);
           const auto t = dom.tangent(s);
           return std::max(p.r, 0.0) * std::hypot(t.r, t.z);
         });
}

// ---------------------------------------------------------------------------
// Limiting condition for general linear scalings

struct ExhaustionTrace {
  std::vector<double> parameters;
  std::vector<double> min_singular_values;
  double log_slope = 0.0;
  bool satisfied = false;
};

/// Tracks the smallest singular value of B(t)^T A(t) along an increasing
/// sweep. The image of the unit ball exhausts R^N exactly when that value
/// diverges; at finite sweeps this is judged by a non-decreasing trace whose
/// log-log growth rate between the sweep ends is at least 1/4.
inline ExhaustionTrace check_exhaustion_condition(const std::function<LinearMap(double)> &a_of,
                                              const std::function<LinearMap(double)> &b_of,
                                              std::span<const double> sweep) {
  ExhaustionTrace out;
  for (double t : sweep) {
    const LinearMap a = a_of(t), b = b_of(t);
    if (a.dimension() != b.dimension())
      throw std::invalid_argument("check_exhaustion_condition: dimension mismatch");
    const Eigen::MatrixXd m = b.matrix().transpose() * a.matrix();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    out.parameters.push_back(t);
    out.min_singular_values.push_back(svd.singularValues().minCoeff());
  }
  const auto &s = out.min_singular_values;
  if (s.size() < 2 || out.parameters.front() <= 0.0 ||
      out.parameters.back() <= out.parameters.front())
    return out;
  bool monotone = true;
  for (std::size_t i = 1; i < s.size(); ++i)
    monotone = monotone && s[i] >= s[i - 1] * (1.0 - 1e-12);
  out.log_slope = std::log(s.back() / s.front()) /
                  std::log(out.parameters.back() / out.parameters.front());
  out.satisfied = monotone && out.log_slope >= 0.25;
  return out;
}

} // namespace dofkit
