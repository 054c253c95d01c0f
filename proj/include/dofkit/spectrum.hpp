// SPDX-License-Identifier: Apache-2.0
//
// Eigenvalue spectra of concentration operators, level counts, transition
// widths, trace identities and scaling sweeps.
#pragma once

#include "dofkit/error.hpp"
#include "dofkit/geometry.hpp"
#include "dofkit/lanczos.hpp"
#include "dofkit/operator.hpp"
#include "dofkit/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dofkit {

inline const std::vector<double> &default_epsilons() {
  static const std::vector<double> eps{0.01, 0.1, 0.5, 0.9, 0.99};
  return eps;
}

struct Spectrum {
  std::vector<double> eigenvalues; ///< non-increasing
  /// True when every eigenvalue of the grid operator is present.
  bool complete = true;
  std::size_t grid_size = 0;
  std::size_t active_size = 0;
  double trace = 0.0;    ///< operator trace
  double trace_sq = 0.0; ///< sum of squared operator entries
  double leading_term = 0.0;
  double raw_min = 0.0;
  double raw_max = 0.0;
  /// Raw eigenvalues were inside [-tol, 1 + tol]; only then are they clamped.
  bool range_ok = true;
  std::string method;
};

enum class EigenMethod { automatic, dense, matrix_free };

struct EigenOptions {
  /// Number of leading eigenvalues; 0 requests all of them (dense only).
  std::size_t count = 0;
  EigenMethod method = EigenMethod::automatic;
  double tolerance = 1e-10;
  double range_tolerance = 1e-6;
  std::size_t max_cycles = 200;
  std::uint64_t seed = 1;
  /// Clamp to [0, 1] once the range check passes.
  bool clamp = true;
};

namespace detail {
inline void finish_spectrum(Spectrum &s, double range_tol, bool clamp) {
  std::sort(s.eigenvalues.begin(), s.eigenvalues.end(), std::greater<>());
  if (s.eigenvalues.empty()) {
    s.raw_min = s.raw_max = 0.0;
    s.range_ok = true;
    return;
  }
  s.raw_max = s.eigenvalues.front();
  s.raw_min = s.eigenvalues.back();
  // a truncated spectrum says nothing about the lower end
  s.range_ok = s.raw_max <= 1.0 + range_tol && (!s.complete || s.raw_min >= -range_tol);
  if (s.range_ok && clamp)
    for (double &v : s.eigenvalues)
      v = std::clamp(v, 0.0, 1.0);
}
} // namespace detail

/// Eigenvalues of the operator: dense symmetric decomposition when the
/// matrix is assembled, restarted Lanczos otherwise.
inline Spectrum eigenvalues(const ConcentrationOperator &op, const EigenOptions &opt = {}) {
  Spectrum s;
  s.grid_size = op.size();
  s.active_size = op.active_size();
  s.trace = op.trace();
  s.leading_term = op.leading_term();

  bool dense = op.has_dense();
  if (opt.method == EigenMethod::dense && !dense)
    throw DenseCapExceeded("eigenvalues: operator was not assembled densely (" +
                           std::to_string(op.active_size()) + " points); use the matrix-free path");
  if (opt.method == EigenMethod::matrix_free)
    dense = false;

  if (dense) {
    const Eigen::MatrixXd &m = op.dense();
    s.trace_sq = m.squaredNorm();
    s.method = "dense";
    if (m.rows() > 0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
      if (es.info() != Eigen::Success)
        throw NumericalError("eigenvalues: dense symmetric eigensolver failed");
      s.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    }
    // inactive grid points contribute exact zeros
    s.eigenvalues.resize(op.size(), 0.0);
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end(), std::greater<>());
    if (opt.count > 0 && opt.count < s.eigenvalues.size()) {
      s.eigenvalues.resize(opt.count);
      s.complete = false;
    }
  } else {
    if (opt.count == 0)
      throw std::invalid_argument("eigenvalues: the matrix-free path needs an explicit count");
    s.trace_sq = op.frobenius_sq();
    s.method = "lanczos";
    LanczosOptions lo;
    lo.count = std::min(opt.count, op.active_size());
    lo.tolerance = opt.tolerance;
    lo.max_cycles = opt.max_cycles;
    lo.seed = opt.seed;
    const auto r = lanczos_largest([&](const Eigen::VectorXd &x) { return op.apply_active(x); },
                                   op.active_size(), lo);
    s.eigenvalues = r.values;
    // pad with the exact zeros of inactive points when they are requested
    while (s.eigenvalues.size() < std::min(opt.count, op.size()) && s.eigenvalues.size() >= op.active_size())
      s.eigenvalues.push_back(0.0);
    s.complete = s.eigenvalues.size() >= op.size();
  }
  detail::finish_spectrum(s, opt.range_tolerance, opt.clamp);
  return s;
}

/// #{k : lambda_k >= eps}; ties at eps are counted.
inline std::size_t count_at_level(const Spectrum &s, double eps) {
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("count_at_level: level must lie in (0, 1)");
  const auto it = std::find_if(s.eigenvalues.begin(), s.eigenvalues.end(),
                               [eps](double v) { return v < eps; });
  if (it == s.eigenvalues.end() && !s.complete) {
    std::ostringstream msg;
    msg << "count_at_level: spectrum truncated above level " << eps << " (" << s.eigenvalues.size()
        << " eigenvalues computed); request more eigenvalues";
    throw NumericalError(msg.str());
  }
  return static_cast<std::size_t>(it - s.eigenvalues.begin());
}

/// N(eps_lo) - N(eps_hi).
inline std::size_t transition_width(const Spectrum &s, double eps_lo = 0.01, double eps_hi = 0.99) {
  if (!(eps_lo < eps_hi))
    throw std::invalid_argument("transition_width: need eps_lo < eps_hi");
  return count_at_level(s, eps_lo) - count_at_level(s, eps_hi);
}

struct TransitionReport {
  std::vector<double> epsilons;
  std::vector<std::size_t> counts;
  std::size_t transition_point = 0; ///< N(1/2)
  std::size_t width = 0;            ///< N(0.01) - N(0.99)
  double leading_term = 0.0;
  std::vector<double> normalized_error; ///< (N(eps) - leading) / leading, per eps

  std::size_t count(double eps) const {
    for (std::size_t i = 0; i < epsilons.size(); ++i)
      if (epsilons[i] == eps)
        return counts[i];
    throw std::out_of_range("TransitionReport: level not in report");
  }
  double error(double eps) const {
    for (std::size_t i = 0; i < epsilons.size(); ++i)
      if (epsilons[i] == eps)
        return normalized_error[i];
    throw std::out_of_range("TransitionReport: level not in report");
  }
};

inline TransitionReport transition_report(const Spectrum &s, std::vector<double> epsilons,
                                          double leading_term) {
  TransitionReport r;
  r.epsilons = std::move(epsilons);
  r.leading_term = leading_term;
  for (double e : r.epsilons) {
    const std::size_t n = count_at_level(s, e);
    r.counts.push_back(n);
    r.normalized_error.push_back(leading_term > 0.0
                                     ? (static_cast<double>(n) - leading_term) / leading_term
                                     : (n == 0 ? 0.0 : std::numeric_limits<double>::infinity()));
  }
  r.transition_point = count_at_level(s, 0.5);
  r.width = transition_width(s);
  return r;
}

struct TraceResiduals {
  double trace = 0.0;
  double trace_sq = 0.0;
  double leading_term = 0.0;
  double trace_residual = 0.0;    ///< (sum lambda - T1) / T1
  double trace_sq_residual = 0.0; ///< (sum lambda^2 - T1) / T1
};

/// Sum of eigenvalues and of their squares, read off the operator entries,
/// against T1 = (2 pi)^-N m(AP) m(BQ).
inline TraceResiduals trace_identities(const ConcentrationOperator &op) {
  TraceResiduals r;
  r.trace = op.trace();
  r.trace_sq = op.has_dense() ? op.dense().squaredNorm() : op.frobenius_sq();
  r.leading_term = op.leading_term();
  if (r.leading_term > 0.0) {
    r.trace_residual = (r.trace - r.leading_term) / r.leading_term;
    r.trace_sq_residual = (r.trace_sq - r.leading_term) / r.leading_term;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scaling sweeps

struct ScalingPoint {
  LinearMap a;
  LinearMap b;
  /// Named parameters reported with the point (beta, or tau and rho, ...).
  std::vector<std::pair<std::string, double>> parameters;
};

struct SweepResult {
  std::size_t index = 0;
  std::vector<std::pair<std::string, double>> parameters;
  double measure_p = 0.0; ///< m(AP)
  double measure_q = 0.0; ///< m(BQ)
  std::size_t grid_size = 0;
  TraceResiduals traces;
  TransitionReport report;
  Spectrum spectrum;
  bool ok = false;
  std::string error;
};

/// Runs every scaling point (concurrently with `workers` threads); results
/// are ordered by sweep index. A failing point is recorded, not rethrown.
inline std::vector<SweepResult> run_sweep(const SupportSet &p, const SupportSet &q,
                                          const std::vector<ScalingPoint> &points,
                                          const std::vector<double> &epsilons,
                                          const Resolution &res = {}, const EigenOptions &eig = {},
                                          std::size_t workers = 1) {
  std::vector<SweepResult> out(points.size());
  parallel_for(points.size(), workers, [&](std::size_t i) {
    SweepResult &r = out[i];
    r.index = i;
    r.parameters = points[i].parameters;
    try {
      const ConcentrationOperator op = make_operator(p, q, points[i].a, points[i].b, res);
      r.measure_p = op.measure_p();
      r.measure_q = op.measure_q();
      r.grid_size = op.size();
      r.traces = trace_identities(op);
      r.spectrum = eigenvalues(op, eig);
      r.report = transition_report(r.spectrum, epsilons, op.leading_term());
      r.ok = true;
    } catch (const std::exception &e) {
      r.ok = false;
      r.error = e.what();
    }
  });
  return out;
}

namespace detail {
inline void require_increasing(const std::vector<double> &v, const char *what) {
  if (v.empty())
    throw std::invalid_argument(std::string(what) + ": empty parameter list");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0))
      throw std::invalid_argument(std::string(what) + ": parameters must be positive");
    if (i > 0 && !(v[i] > v[i - 1]))
      throw std::invalid_argument(std::string(what) + ": parameters must be increasing");
  }
}
} // namespace detail

/// Landau scaling: A = beta I on the time support, B = I.
inline std::vector<ScalingPoint> landau_points(int dimension, const std::vector<double> &betas) {
  detail::require_increasing(betas, "landau_sweep");
  std::vector<ScalingPoint> pts;
  for (double beta : betas) {
    std::vector<double> d(static_cast<std::size_t>(dimension), beta);
    pts.push_back(ScalingPoint{LinearMap::diagonal(d), LinearMap::identity(dimension), {{"beta", beta}}});
  }
  return pts;
}

/// Anisotropic scaling: A stretches the first (time) axis by tau, B stretches
/// every spectral axis but the first (temporal frequency) by rho. With
/// `paired` the lists are zipped, otherwise their grid is taken.
inline std::vector<ScalingPoint> anisotropic_points(int dimension, const std::vector<double> &taus,
                                                    const std::vector<double> &rhos, bool paired) {
  if (dimension < 2)
    throw std::invalid_argument("anisotropic_sweep: needs dimension >= 2");
  if (taus.empty() || rhos.empty())
    throw std::invalid_argument("anisotropic_sweep: empty parameter list");
  for (double v : taus)
    if (!(v > 0.0))
      throw std::invalid_argument("anisotropic_sweep: tau must be positive");
  for (double v : rhos)
    if (!(v > 0.0))
      throw std::invalid_argument("anisotropic_sweep: rho must be positive");
  if (paired && taus.size() != rhos.size())
    throw std::invalid_argument("anisotropic_sweep: paired lists differ in length");
  auto make = [dimension](double tau, double rho) {
    std::vector<double> a(static_cast<std::size_t>(dimension), 1.0), b(static_cast<std::size_t>(dimension), rho);
    a[0] = tau;
    b[0] = 1.0;
    return ScalingPoint{LinearMap::diagonal(a), LinearMap::diagonal(b), {{"tau", tau}, {"rho", rho}}};
  };
  std::vector<ScalingPoint> pts;
  if (paired) {
    for (std::size_t i = 0; i < taus.size(); ++i)
      pts.push_back(make(taus[i], rhos[i]));
  } else {
    for (double tau : taus)
      for (double rho : rhos)
        pts.push_back(make(tau, rho));
  }
  return pts;
}

inline std::vector<SweepResult> landau_sweep(const SupportSet &p_base, const SupportSet &q,
                                             const std::vector<double> &betas,
                                             const std::vector<double> &epsilons,
                                             const Resolution &res = {}, const EigenOptions &eig = {},
                                             std::size_t workers = 1) {
  return run_sweep(p_base, q, landau_points(p_base.dimension(), betas), epsilons, res, eig, workers);
}

inline std::vector<SweepResult> anisotropic_sweep(const SupportSet &p, const SupportSet &q,
                                                  const std::vector<double> &taus,
                                                  const std::vector<double> &rhos,
                                                  const std::vector<double> &epsilons, bool paired,
                                                  const Resolution &res = {},
                                                  const EigenOptions &eig = {}, std::size_t workers = 1) {
  return run_sweep(p, q, anisotropic_points(p.dimension(), taus, rhos, paired), epsilons, res, eig,
                   workers);
}

/// N / (scaling volume * (2 pi)^-N m(P) m(Q)) at level eps for one sweep point.
inline double normalized_count(const SweepResult &r, double eps) {
  return static_cast<double>(r.report.count(eps)) / r.report.leading_term;
}

} // namespace dofkit
