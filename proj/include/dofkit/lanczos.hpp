// SPDX-License-Identifier: Apache-2.0
//
// Matrix-free symmetric Lanczos for the largest eigenvalues, with full
// reorthogonalization, thick restarts and locking of converged Ritz pairs.
#pragma once

#include "dofkit/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

namespace dofkit {

struct LanczosOptions {
  std::size_t count = 10;
  /// Residual tolerance relative to the spectral radius estimate.
  double tolerance = 1e-10;
  /// Krylov subspace size per cycle; 0 picks max(2 count + 20, 40).
  std::size_t subspace = 0;
  std::size_t max_cycles = 200;
  std::uint64_t seed = 1;
};

struct LanczosResult {
  std::vector<double> values; ///< non-increasing
  std::vector<double> residuals;
  std::size_t cycles = 0;
  std::size_t matvecs = 0;
};

/// Largest `count` eigenvalues of the symmetric operator `apply` of size n.
///
/// Each cycle extends an orthonormal Krylov basis V to the subspace size and
/// takes Ritz pairs of V^T A V. Converged pairs are locked and projected out;
/// the leading unconverged Ritz vectors are kept for the next cycle (thick
/// restart), together with the next Krylov direction. Once enough pairs are
/// locked, a fresh cycle checks that no larger eigenvalue was missed.
inline LanczosResult
lanczos_largest(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> &apply, std::size_t n,
                const LanczosOptions &opt) {
  using Eigen::Index;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;

  LanczosResult result;
  const std::size_t count = std::min(opt.count, n);
  if (count == 0)
    return result;

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = static_cast<Index>(n);

  MatrixXd locked(dim, 0);
  std::vector<double> locked_values, locked_residuals;
  double anorm = 0.0;

  auto orthogonalize = [&](VectorXd &w, const MatrixXd &basis) {
    for (int pass = 0; pass < 2; ++pass) {
      if (locked.cols() > 0)
        w -= locked * (locked.transpose() * w);
      if (basis.cols() > 0)
        w -= basis * (basis.transpose() * w);
    }
  };
  // unit vector orthogonal to `basis` and the locked vectors; empty if none
  auto random_direction = [&](const MatrixXd &basis) {
    for (int attempt = 0; attempt < 3; ++attempt) {
      VectorXd x(dim);
      for (Index i = 0; i < dim; ++i)
        x[i] = normal(rng);
      const double before = x.norm();
      orthogonalize(x, basis);
      const double nrm = x.norm();
      if (nrm > 1e-8 * before)
        return VectorXd(x / nrm);
    }
    return VectorXd();
  };

  const std::size_t m_default = opt.subspace ? opt.subspace : std::max<std::size_t>(2 * count + 20, 40);
  MatrixXd v(dim, 0), av(dim, 0);
  VectorXd next;
  double last_residual = 0.0;
  bool verifying = false;
  bool done = false;

  for (std::size_t cycle = 0; cycle < opt.max_cycles && !done; ++cycle) {
    result.cycles = cycle + 1;
    const std::size_t free_dim = n - static_cast<std::size_t>(locked.cols());
    if (free_dim == 0)
      break;
    const auto m = static_cast<Index>(std::min(free_dim, std::max<std::size_t>(m_default, 2)));

    while (v.cols() < m) {
      if (next.size() == 0)
        next = random_direction(v);
      if (next.size() == 0)
        break;
      const VectorXd w = apply(next);
      ++result.matvecs;
      anorm = std::max({anorm, w.norm(), 1e-300});
      v.conservativeResize(Eigen::NoChange, v.cols() + 1);
      av.conservativeResize(Eigen::NoChange, av.cols() + 1);
      v.col(v.cols() - 1) = next;
      av.col(av.cols() - 1) = w;
      VectorXd cand = w;
      orthogonalize(cand, v);
      const double nrm = cand.norm();
      // an invariant subspace was found; continue from a random direction
      next = nrm > 1e-12 * anorm ? VectorXd(cand / nrm) : VectorXd();
    }
    const Index k = v.cols();
    if (k == 0)
      break;

    MatrixXd h = v.transpose() * av;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
    if (es.info() != Eigen::Success)
      throw NumericalError("lanczos: projected eigenproblem failed");
    const VectorXd theta = es.eigenvalues(); // ascending
    const MatrixXd s = es.eigenvectors();
    anorm = std::max({anorm, std::abs(theta[0]), std::abs(theta[k - 1])});
    const double tol = opt.tolerance * anorm;

    auto ritz = [&](Index i, VectorXd &x) {
      x = v * s.col(i);
      return (av * s.col(i) - theta[i] * x).norm();
    };
    auto lock = [&](const VectorXd &x, double value, double res) {
      locked.conservativeResize(Eigen::NoChange, locked.cols() + 1);
      locked.col(locked.cols() - 1) = x;
      locked_values.push_back(value);
      locked_residuals.push_back(res);
    };
    auto restart_with = [&](Index top, Index keep) {
      // keep Ritz vectors top, top-1, ..., top-keep+1; `next` stays orthogonal to them
      MatrixXd sk(k, keep);
      for (Index c = 0; c < keep; ++c)
        sk.col(c) = s.col(top - c);
      v = (v * sk).eval();
      av = (av * sk).eval();
    };

    if (verifying) {
      // the deflated operator must not hold anything above the smallest
      // locked value; Ritz values underestimate its top, so this is safe
      const double min_locked = *std::min_element(locked_values.begin(), locked_values.end());
      VectorXd x;
      const double res = ritz(k - 1, x);
      if (theta[k - 1] <= min_locked + tol) {
        done = true;
        break;
      }
      if (res <= tol) {
        // replace the smallest locked pair by the missed one
        const auto it = std::min_element(locked_values.begin(), locked_values.end());
        const auto pos = static_cast<Index>(it - locked_values.begin());
        MatrixXd kept(dim, locked.cols() - 1);
        for (Index c = 0, out = 0; c < locked.cols(); ++c)
          if (c != pos)
            kept.col(out++) = locked.col(c);
        locked = kept;
        locked_values.erase(it);
        locked_residuals.erase(locked_residuals.begin() + pos);
        lock(x, theta[k - 1], res);
        v.resize(dim, 0);
        av.resize(dim, 0);
        next = VectorXd();
        continue;
      }
      last_residual = res;
      restart_with(k - 1, std::max<Index>(1, std::min<Index>(k - 1, m / 2)));
      continue;
    }

    // lock converged Ritz pairs from the top down
    const std::size_t need = count - locked_values.size();
    std::size_t taken = 0;
    Index i = k - 1;
    for (; i >= 0 && taken < need; --i) {
      VectorXd x;
      const double res = ritz(i, x);
      if (res > tol) {
        last_residual = res;
        break;
      }
      lock(x, theta[i], res);
      ++taken;
    }
    if (locked_values.size() >= count) {
      verifying = true;
      v.resize(dim, 0);
      av.resize(dim, 0);
      next = VectorXd();
      continue;
    }
    if (i < 0) {
      v.resize(dim, 0);
      av.resize(dim, 0);
      continue;
    }
    restart_with(i, std::max<Index>(1, std::min<Index>(i + 1, m / 2)));
  }

  if (done || locked_values.size() >= count || static_cast<std::size_t>(locked.cols()) == n) {
    result.values = locked_values;
    result.residuals = locked_residuals;
  } else {
    std::ostringstream msg;
    msg << "lanczos: " << locked_values.size() << " of " << count << " eigenpairs converged after "
        << result.cycles << " cycles (" << result.matvecs << " products); last residual " << last_residual
        << ", tolerance " << opt.tolerance * anorm;
    throw NumericalError(msg.str());
  }

  std::vector<std::size_t> order(result.values.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return result.values[a] > result.values[b]; });
  LanczosResult sorted = result;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted.values[k] = result.values[order[k]];
    sorted.residuals[k] = result.residuals[order[k]];
  }
  sorted.values.resize(std::min(sorted.values.size(), count));
  sorted.residuals.resize(sorted.values.size());
  return sorted;
}

} // namespace dofkit
