// SPDX-License-Identifier: Apache-2.0

#include "dofkit/lanczos.hpp"
#include "dofkit/spectrum.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace dofkit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
constexpr double pi = std::numbers::pi;

Spectrum spectrum_of(std::vector<double> ev, bool complete = true) {
  Spectrum s;
  s.eigenvalues = std::move(ev);
  s.complete = complete;
  return s;
}

SupportSet interval(double lo, double hi) { return SupportSet::box(BoundingBox{{lo, hi}}); }

std::function<Eigen::VectorXd(const Eigen::VectorXd &)> diagonal(const Eigen::VectorXd &d) {
  return [d](const Eigen::VectorXd &x) { return Eigen::VectorXd(d.cwiseProduct(x)); };
}
} // namespace

TEST_CASE("count_at_level counts ties", "[spectrum]") {
  const auto s = spectrum_of({0.9, 0.5, 0.5, 0.2, 0.0});
  CHECK(count_at_level(s, 0.5) == 3);
  CHECK(count_at_level(s, 0.50000001) == 1);
  CHECK(count_at_level(s, 0.01) == 4);
  CHECK(count_at_level(s, 0.95) == 0);
  CHECK_THROWS_AS(count_at_level(s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(count_at_level(s, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(count_at_level(s, -0.2), std::invalid_argument);
}

TEST_CASE("truncated spectra refuse counts they cannot answer", "[spectrum]") {
  const auto s = spectrum_of({0.99, 0.8, 0.6}, false);
  CHECK(count_at_level(s, 0.7) == 2);
  CHECK_THROWS_AS(count_at_level(s, 0.5), NumericalError);
}

TEST_CASE("transition width", "[spectrum]") {
  CHECK(transition_width(spectrum_of({1.0, 1.0, 1.0, 0.0, 0.0})) == 0);
  CHECK(transition_width(spectrum_of({0.995, 0.98, 0.5, 0.02, 0.005})) == 3);
  CHECK_THROWS_AS(transition_width(spectrum_of({0.5}), 0.9, 0.1), std::invalid_argument);
  const auto r = transition_report(spectrum_of({0.995, 0.98, 0.5, 0.02, 0.005}), default_epsilons(), 2.0);
  CHECK(r.transition_point == 3);
  CHECK(r.width == 3);
  CHECK(r.count(0.01) == 4);
  CHECK(r.error(0.5) == 0.5);
  CHECK_THROWS_AS(r.count(0.3), std::out_of_range);
}

TEST_CASE("zero leading term reports zero error for an empty count", "[spectrum]") {
  const auto r = transition_report(spectrum_of({0.0, 0.0}), {0.5}, 0.0);
  CHECK(r.count(0.5) == 0);
  CHECK(r.error(0.5) == 0.0);
}

TEST_CASE("1-D interval: N(1/2) sits at Omega T / pi", "[spectrum]") {
  for (double tb : {4.0, 10.0}) {
    const auto op = make_operator(interval(0.0, 1.0), SupportSet::centered_box({tb * pi}));
    const auto s = eigenvalues(op);
    CHECK(s.range_ok);
    CHECK(s.method == "dense");
    const double n = static_cast<double>(count_at_level(s, 0.5));
    CHECK(std::abs(n - tb) <= 1.0);
    CHECK(transition_width(s) <= 2 * static_cast<std::size_t>(std::log(tb)) + 6);
  }
}

TEST_CASE("N(eps) is non-increasing and sum lambda^2 <= sum lambda", "[spectrum][property]") {
  oracle::Gen gen(5);
  for (int trial = 0; trial < 6; ++trial) {
    const double omega = gen.uniform(0.5, 6.0), t0 = gen.uniform(0.3, 3.0), t1 = gen.uniform(0.3, 2.0);
    const auto op = make_operator(SupportSet::box(BoundingBox{{0.0, t0}, {0.0, t1}}),
                                  SupportSet::centered_box({omega, omega}));
    const auto s = eigenvalues(op);
    std::size_t prev = s.eigenvalues.size();
    for (double e = 0.01; e < 1.0; e += 0.049) {
      const std::size_t n = count_at_level(s, e);
      CHECK(n <= prev);
      prev = n;
    }
    double sum = 0.0, sq = 0.0;
    for (double v : s.eigenvalues) {
      sum += v;
      sq += v * v;
    }
    CHECK(sq <= sum + 1e-12);
    CHECK_THAT(sum, WithinRel(op.trace(), 1e-9));
  }
}

TEST_CASE("Lanczos agrees with the dense solver", "[spectrum][lanczos]") {
  const auto cone = SupportSet::omega_sliced(OmegaSlicedSet::cone(pi, {1.0}));
  const auto op = make_operator(SupportSet::box(BoundingBox{{0.0, 4.0}, {-1.0, 1.0}}), cone);
  EigenOptions dense, mf;
  dense.clamp = mf.clamp = false;
  mf.method = EigenMethod::matrix_free;
  mf.count = 30;
  const auto a = eigenvalues(op, dense);
  const auto b = eigenvalues(op, mf);
  REQUIRE(b.eigenvalues.size() == 30);
  for (std::size_t k = 0; k < 30; ++k)
    CHECK_THAT(b.eigenvalues[k], WithinAbs(a.eigenvalues[k], 1e-8));
  EigenOptions no_count;
  no_count.method = EigenMethod::matrix_free;
  CHECK_THROWS_AS(eigenvalues(op, no_count), std::invalid_argument);
}

TEST_CASE("Lanczos on clustered diagonal spectra", "[lanczos]") {
  const Eigen::Index n = 300;
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d[i] = i < 12 ? 1.0 - 1e-9 * static_cast<double>(i % 3) : 0.5 * std::exp(-0.05 * static_cast<double>(i));
  LanczosOptions opt;
  opt.count = 15;
  const auto r = lanczos_largest(diagonal(d), static_cast<std::size_t>(n), opt);
  std::vector<double> want(d.data(), d.data() + n);
  std::sort(want.begin(), want.end(), std::greater<>());
  REQUIRE(r.values.size() == 15);
  for (std::size_t k = 0; k < 15; ++k)
    CHECK_THAT(r.values[k], WithinAbs(want[k], 1e-9));
}

TEST_CASE("Lanczos resolves a dense cluster below the top", "[lanczos]") {
  // 40 eigenvalues within 1e-2 of 1, then a slow decay: restarts must keep
  // Krylov information to converge here
  const Eigen::Index n = 500;
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d[i] = i < 40 ? 1.0 - 2.5e-4 * static_cast<double>(i) : 0.99 * std::exp(-0.02 * static_cast<double>(i - 40));
  LanczosOptions opt;
  opt.count = 10;
  const auto r = lanczos_largest(diagonal(d), static_cast<std::size_t>(n), opt);
  REQUIRE(r.values.size() == 10);
  for (std::size_t k = 0; k < 10; ++k)
    CHECK_THAT(r.values[k], WithinAbs(d[static_cast<Eigen::Index>(k)], 1e-9));
}

TEST_CASE("Lanczos reports non-convergence", "[lanczos]") {
  const Eigen::Index n = 3000;
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d[i] = static_cast<double>(i + 1) / static_cast<double>(n);
  LanczosOptions opt;
  opt.count = 20;
  opt.subspace = 22;
  opt.max_cycles = 1;
  opt.tolerance = 1e-14;
  CHECK_THROWS_AS(lanczos_largest(diagonal(d), static_cast<std::size_t>(n), opt), NumericalError);
}

TEST_CASE("sweep points", "[sweep]") {
  CHECK(landau_points(2, {1.0, 2.0, 4.0}).size() == 3);
  CHECK(anisotropic_points(2, {1.0, 2.0}, {1.0, 3.0}, false).size() == 4);
  CHECK(anisotropic_points(2, {1.0, 2.0}, {1.0, 3.0}, true).size() == 2);
  CHECK_THROWS_AS(landau_points(1, {2.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(landau_points(1, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(anisotropic_points(1, {1.0}, {1.0}, true), std::invalid_argument);
  CHECK_THROWS_AS(anisotropic_points(2, {1.0, 2.0}, {1.0}, true), std::invalid_argument);
  const auto pt = anisotropic_points(3, {2.0}, {5.0}, true).front();
  CHECK(pt.a.determinant() == 2.0);
  CHECK(pt.b.determinant() == 25.0);
}

TEST_CASE("sweeps are ordered and independent of the worker count", "[sweep]") {
  const auto p = SupportSet::box(BoundingBox{{0.0, 1.0}, {0.0, 1.0}});
  const auto q = SupportSet::centered_box({pi, pi});
  const auto one = anisotropic_sweep(p, q, {1.0, 2.0}, {1.0, 2.0}, default_epsilons(), false, {}, {}, 1);
  const auto two = anisotropic_sweep(p, q, {1.0, 2.0}, {1.0, 2.0}, default_epsilons(), false, {}, {}, 2);
  REQUIRE(one.size() == 4);
  REQUIRE(two.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(one[i].ok);
    CHECK(one[i].index == i);
    CHECK(one[i].parameters == two[i].parameters);
    CHECK(one[i].spectrum.eigenvalues == two[i].spectrum.eigenvalues);
    CHECK_THAT(one[i].report.leading_term,
               WithinRel(one[i].parameters[0].second * one[i].parameters[1].second, 1e-12));
  }
}

TEST_CASE("a failing sweep point is recorded, not thrown", "[sweep]") {
  Resolution res;
  res.dense = DenseMode::always;
  res.points = {4};
  const auto out = landau_sweep(interval(0.0, 1.0), SupportSet::centered_box({pi}), {1.0, 64.0},
                                default_epsilons(), res);
  CHECK(out[0].ok);
  CHECK_FALSE(out[1].ok);
  CHECK_FALSE(out[1].error.empty());
}

TEST_CASE("Landau scaling counts approach the leading term", "[sweep]") {
  const auto out = landau_sweep(interval(0.0, 1.0), SupportSet::centered_box({pi}), {4.0, 16.0}, {0.5});
  for (const auto &r : out) {
    REQUIRE(r.ok);
    CHECK(std::abs(normalized_count(r, 0.5) - 1.0) <= 0.25);
  }
}
