// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace dofkit {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the three-term Legendre recurrence. Exact for polynomials of degree
/// 2n-1.
inline QuadratureRule gauss_legendre(std::size_t n) {
  if (n == 0)
    throw std::invalid_argument("gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  // Legendre P_n(x) and P_{n-1}(x) by the three-term recurrence
  auto legendre = [n](double x, double &p_prev) {
    double p0 = 1.0, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double kk = static_cast<double>(k);
      const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
      p0 = p1;
      p1 = p2;
    }
    p_prev = p0;
    return p1;
  };
  for (std::size_t i = 0; i < half; ++i) {
    // Tricomi initial guess
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double p_prev = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      const double p = legendre(x, p_prev);
      const double dp = static_cast<double>(n) * (x * p - p_prev) / (x * x - 1.0);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    const double p = legendre(x, p_prev);
    const double dp = static_cast<double>(n) * (x * p - p_prev) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1)
    rule.nodes[n / 2] = 0.0;
  return rule;
}

/// The rule mapped affinely onto [a, b].
inline QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
  QuadratureRule rule = gauss_legendre(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (std::size_t i = 0; i < n; ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

/// Composite Gauss-Legendre: `panels` equal sub-intervals of [a, b], each with
/// an `order`-point rule.
inline QuadratureRule composite_gauss_legendre(std::size_t order, std::size_t panels,
                                               double a, double b) {
  QuadratureRule rule;
  rule.nodes.reserve(order * panels);
  rule.weights.reserve(order * panels);
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const QuadratureRule local =
        gauss_legendre(order, a + h * static_cast<double>(p), a + h * static_cast<double>(p + 1));
    rule.nodes.insert(rule.nodes.end(), local.nodes.begin(), local.nodes.end());
    rule.weights.insert(rule.weights.end(), local.weights.begin(), local.weights.end());
  }
  return rule;
}

template <typename F>
double integrate(const QuadratureRule &rule, F &&f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    sum += rule.weights[i] * f(rule.nodes[i]);
  return sum;
}

} // namespace dofkit
