// SPDX-License-Identifier: Apache-2.0
//
// Symmetrized Nystrom discretization of T_{AP} B_{BQ} T_{AP} on a uniform
// midpoint grid covering the bounding box of AP:
//
//   M[i, j] = sqrt(w_i w_j) 1_{AP}(x_i) 1_{AP}(x_j) h(x_i - x_j)
//
// Points outside AP carry zero weight, so the operator acts on the active
// (inside) points only; full-grid vectors are accepted by apply().
#pragma once

#include "dofkit/error.hpp"
#include "dofkit/geometry.hpp"
#include "dofkit/kernel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dofkit {

inline constexpr std::size_t kDefaultDenseCap = 4096;

/// Dense-assembly cap in grid points; DOFKIT_DENSE_CAP overrides the default.
inline std::size_t default_dense_cap() {
  if (const char *env = std::getenv("DOFKIT_DENSE_CAP")) {
    char *end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0')
      return static_cast<std::size_t>(v);
  }
  return kDefaultDenseCap;
}

struct Grid {
  std::vector<double> lower;
  std::vector<double> spacing;
  std::vector<std::size_t> counts;

  std::size_t dimension() const { return counts.size(); }
  std::size_t size() const {
    std::size_t n = 1;
    for (auto c : counts)
      n *= c;
    return n;
  }
  double cell_volume() const {
    double v = 1.0;
    for (double d : spacing)
      v *= d;
    return v;
  }
  /// Midpoint of cell `flat` (row-major, last axis fastest).
  std::vector<double> point(std::size_t flat) const {
    std::vector<double> x(dimension());
    for (std::size_t k = dimension(); k-- > 0;) {
      const std::size_t i = flat % counts[k];
      flat /= counts[k];
      x[k] = lower[k] + (static_cast<double>(i) + 0.5) * spacing[k];
    }
    return x;
  }
};

enum class DenseMode { automatic, always, never };

struct Resolution {
  /// Grid refinement relative to the coarsest admissible spacing
  /// pi / (2 U_k), U_k the extent of BQ along axis k.
  double oversampling = 2.0;
  /// Explicit points per axis; overrides oversampling when non-empty.
  std::vector<std::size_t> points;
  bool enforce_nyquist = true;
  DenseMode dense = DenseMode::automatic;
  std::size_t dense_cap = default_dense_cap();
};

class ConcentrationOperator {
public:
  ConcentrationOperator(Grid grid, std::vector<std::size_t> active, std::vector<std::int64_t> codes,
                        std::int64_t center, std::vector<double> table, std::shared_ptr<const Kernel> kernel,
                        double measure_p, double measure_q)
      : grid_(std::move(grid)), active_(std::move(active)), codes_(std::move(codes)), center_(center),
        table_(std::move(table)), kernel_(std::move(kernel)), measure_p_(measure_p),
        measure_q_(measure_q), weight_(grid_.cell_volume()) {}

  const Grid &grid() const { return grid_; }
  const Kernel &kernel() const { return *kernel_; }
  /// Full grid size (active and inactive points).
  std::size_t size() const { return grid_.size(); }
  std::size_t active_size() const { return active_.size(); }
  const std::vector<std::size_t> &active_points() const { return active_; }
  double weight() const { return weight_; }
  int dimension() const { return static_cast<int>(grid_.dimension()); }
  /// m(AP) and m(BQ).
  double measure_p() const { return measure_p_; }
  double measure_q() const { return measure_q_; }
  /// (2 pi)^-N m(AP) m(BQ) = |det A| |det B| (2 pi)^-N m(P) m(Q).
  double leading_term() const {
    return measure_p_ * measure_q_ / std::pow(2.0 * std::numbers::pi, dimension());
  }

  double entry(std::size_t i, std::size_t j) const {
    return weight_ * table_[static_cast<std::size_t>(codes_[i] - codes_[j] + center_)];
  }

  bool has_dense() const { return dense_.has_value(); }
  const Eigen::MatrixXd &dense() const {
    if (!dense_)
      throw std::logic_error("ConcentrationOperator: dense matrix not assembled");
    return *dense_;
  }

  /// Matrix-free product on the active points.
  Eigen::VectorXd apply_active(const Eigen::VectorXd &x) const {
    const auto n = active_size();
    if (static_cast<std::size_t>(x.size()) != n)
      throw std::invalid_argument("apply: vector length does not match the active grid");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    const double *t = table_.data();
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t base = codes_[i] + center_;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += t[base - codes_[j]] * x[static_cast<Eigen::Index>(j)];
      y[static_cast<Eigen::Index>(i)] = weight_ * acc;
    }
    return y;
  }

  /// Product with a full-grid vector; the result vanishes outside AP.
  std::vector<double> apply(std::span<const double> f) const {
    if (f.size() != size())
      throw std::invalid_argument("apply: vector length " + std::to_string(f.size()) +
                                  " does not match grid size " + std::to_string(size()));
    Eigen::VectorXd x(static_cast<Eigen::Index>(active_size()));
    for (std::size_t i = 0; i < active_size(); ++i)
      x[static_cast<Eigen::Index>(i)] = f[active_[i]];
    const Eigen::VectorXd y = apply_active(x);
    std::vector<double> out(size(), 0.0);
    for (std::size_t i = 0; i < active_size(); ++i)
      out[active_[i]] = y[static_cast<Eigen::Index>(i)];
    return out;
  }

  double trace() const {
    return static_cast<double>(active_size()) * weight_ * table_[static_cast<std::size_t>(center_)];
  }

  /// Sum of squared entries, i.e. the sum of squared eigenvalues.
  double frobenius_sq() const {
    double s = 0.0;
    for (std::size_t i = 0; i < active_size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < active_size(); ++j) {
        const double v = entry(i, j);
        row += v * v;
      }
      s += row;
    }
    return s;
  }

  void assemble_dense() {
    const auto n = static_cast<Eigen::Index>(active_size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double v = entry(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        m(i, j) = v;
        m(j, i) = v;
      }
    dense_ = std::move(m);
  }

private:
  Grid grid_;
  std::vector<std::size_t> active_;
  std::vector<std::int64_t> codes_;
  std::int64_t center_;
  std::vector<double> table_;
  std::shared_ptr<const Kernel> kernel_;
  double measure_p_;
  double measure_q_;
  double weight_;
  std::optional<Eigen::MatrixXd> dense_;
};

/// Grid covering the bounding box of `ap`, sized from the band extent of
/// the kernel unless explicit points are given.
inline Grid make_grid(const SupportSet &ap, const std::vector<double> &band_extent,
                      const Resolution &res) {
  if (!ap.is_bounded())
    throw std::invalid_argument("assemble: unbounded time/space support");
  const auto n = static_cast<std::size_t>(ap.dimension());
  if (band_extent.size() != n)
    throw std::invalid_argument("assemble: kernel and support dimensions differ");
  if (!res.points.empty() && res.points.size() != n)
    throw std::invalid_argument("assemble: resolution.points has the wrong dimension");
  if (res.points.empty() && !(res.oversampling > 0.0))
    throw std::invalid_argument("assemble: oversampling must be positive");
  Grid g;
  for (std::size_t k = 0; k < n; ++k) {
    const Interval iv = ap.bounding_box()[k];
    std::size_t count = 0;
    if (!res.points.empty()) {
      count = res.points[k];
      if (count == 0)
        throw std::invalid_argument("assemble: resolution.points must be positive");
    } else {
      const double need = iv.length() * 2.0 * band_extent[k] * res.oversampling / std::numbers::pi;
      count = static_cast<std::size_t>(std::max(1.0, std::ceil(need - 1e-9)));
    }
    g.lower.push_back(iv.lo);
    g.counts.push_back(count);
    g.spacing.push_back(iv.length() / static_cast<double>(count));
  }
  if (res.enforce_nyquist) {
    for (std::size_t k = 0; k < n; ++k) {
      if (band_extent[k] <= 0.0)
        continue;
      const double bound = std::numbers::pi / (2.0 * band_extent[k]);
      if (g.spacing[k] > bound * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "assemble: grid spacing " << g.spacing[k] << " on axis " << k
            << " exceeds the oversampling bound pi/(2U) = " << bound << " (U = " << band_extent[k]
            << "); use at least "
            << static_cast<std::size_t>(std::ceil(ap.bounding_box()[k].length() / bound - 1e-9))
            << " points on that axis";
        throw std::invalid_argument(msg.str());
      }
    }
  }
  return g;
}

/// Discretizes T_{AP} B_{BQ} T_{AP} given the already mapped time support
/// `ap`, the kernel of BQ, and m(BQ).
inline ConcentrationOperator assemble(const SupportSet &ap, std::shared_ptr<const Kernel> kernel,
                                      double measure_q, const Resolution &res = {}) {
  const Grid grid = make_grid(ap, kernel->band_extent(), res);
  const std::size_t n = grid.dimension();

  // offset table strides: axis k spans 2 n_k - 1 offsets
  std::vector<std::int64_t> stride(n);
  std::int64_t table_size = 1;
  for (std::size_t k = n; k-- > 0;) {
    stride[k] = table_size;
    table_size *= 2 * static_cast<std::int64_t>(grid.counts[k]) - 1;
  }
  std::int64_t center = 0;
  for (std::size_t k = 0; k < n; ++k)
    center += (static_cast<std::int64_t>(grid.counts[k]) - 1) * stride[k];

  std::vector<std::size_t> active;
  std::vector<std::int64_t> codes;
  for (std::size_t flat = 0; flat < grid.size(); ++flat) {
    const auto x = grid.point(flat);
    if (!ap.contains(x))
      continue;
    std::size_t rem = flat;
    std::int64_t code = 0;
    for (std::size_t k = n; k-- > 0;) {
      code += static_cast<std::int64_t>(rem % grid.counts[k]) * stride[k];
      rem /= grid.counts[k];
    }
    active.push_back(flat);
    codes.push_back(code);
  }

  if (res.dense == DenseMode::always && active.size() > res.dense_cap)
    throw DenseCapExceeded("assemble: " + std::to_string(active.size()) +
                           " active grid points exceed the dense cap of " +
                           std::to_string(res.dense_cap) + "; use the matrix-free path");

  // kernel on the offset lattice, mirrored so that h(-u) == h(u) bit for bit
  std::vector<double> table(static_cast<std::size_t>(table_size), 0.0);
  std::vector<double> u(n);
  if (!active.empty()) {
    for (std::int64_t c = 0; c <= center; ++c) {
      std::int64_t rem = c;
      for (std::size_t k = 0; k < n; ++k) {
        const std::int64_t idx = rem / stride[k];
        rem %= stride[k];
        u[k] = static_cast<double>(idx - (static_cast<std::int64_t>(grid.counts[k]) - 1)) *
               grid.spacing[k];
      }
      const double v = (*kernel)(u);
      table[static_cast<std::size_t>(c)] = v;
      table[static_cast<std::size_t>(2 * center - c)] = v;
    }
  }

  const double mp = measure(ap).value;
  ConcentrationOperator op(grid, std::move(active), std::move(codes), center, std::move(table),
                           std::move(kernel), mp, measure_q);
  const bool dense = res.dense == DenseMode::always ||
                     (res.dense == DenseMode::automatic && op.active_size() <= res.dense_cap);
  if (dense)
    op.assemble_dense();
  return op;
}

/// Builds AP and BQ, a kernel probed over the extent of AP, and the operator.
inline ConcentrationOperator make_operator(const SupportSet &p, const SupportSet &q,
                                           const LinearMap &a, const LinearMap &b,
                                           const Resolution &res = {}) {
  const SupportSet ap = apply_map(a, p);
  const SupportSet bq = apply_map(b, q);
  KernelOptions kopt;
  for (const auto &iv : ap.bounding_box())
    kopt.probe_extent.push_back(std::max(iv.length(), 1e-3));
  auto kernel = std::make_shared<const Kernel>(detail::kernel_of(bq, kopt));
  return assemble(ap, std::move(kernel), measure(bq).value, res);
}

inline ConcentrationOperator make_operator(const SupportSet &p, const SupportSet &q,
                                           const Resolution &res = {}) {
  return make_operator(p, q, LinearMap::identity(p.dimension()), LinearMap::identity(q.dimension()),
                       res);
}

// ---------------------------------------------------------------------------
// Binary matrix dump: "DOFKMAT1", u64 N, u64 counts[N], f64 spacings[N],
// u64 rows, then rows*rows f64 row-major. Little-endian host order.

inline void write_matrix_dump(const ConcentrationOperator &op, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("write_matrix_dump: cannot open " + path);
  const Eigen::MatrixXd &m = op.dense();
  out.write("DOFKMAT1", 8);
  const std::uint64_t dims = op.grid().dimension();
  out.write(reinterpret_cast<const char *>(&dims), sizeof dims);
  for (auto c : op.grid().counts) {
    const std::uint64_t v = c;
    out.write(reinterpret_cast<const char *>(&v), sizeof v);
  }
  for (double s : op.grid().spacing)
    out.write(reinterpret_cast<const char *>(&s), sizeof s);
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  out.write(reinterpret_cast<const char *>(&rows), sizeof rows);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
}

struct MatrixDump {
  std::vector<std::size_t> counts;
  std::vector<double> spacing;
  Eigen::MatrixXd matrix;
};

inline MatrixDump read_matrix_dump(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("read_matrix_dump: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "DOFKMAT1")
    throw std::runtime_error("read_matrix_dump: bad magic in " + path);
  auto read_u64 = [&] {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char *>(&v), sizeof v);
    return v;
  };
  MatrixDump d;
  const auto dims = read_u64();
  for (std::uint64_t k = 0; k < dims; ++k)
    d.counts.push_back(static_cast<std::size_t>(read_u64()));
  for (std::uint64_t k = 0; k < dims; ++k) {
    double s = 0.0;
    in.read(reinterpret_cast<char *>(&s), sizeof s);
    d.spacing.push_back(s);
  }
  const auto rows = static_cast<Eigen::Index>(read_u64());
  d.matrix.resize(rows, rows);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < rows; ++j)
      in.read(reinterpret_cast<char *>(&d.matrix(i, j)), sizeof(double));
  if (!in)
    throw std::runtime_error("read_matrix_dump: truncated file " + path);
  return d;
}

} // namespace dofkit
