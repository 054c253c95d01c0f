// SPDX-License-Identifier: Apache-2.0

#include "dofkit/kernel.hpp"
#include "dofkit/quadrature.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace dofkit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST_CASE("Gauss-Legendre rules integrate polynomials exactly", "[quadrature]") {
  for (std::size_t n : {1u, 2u, 5u, 16u, 64u}) {
    const auto rule = gauss_legendre(n, -1.0, 2.0);
    double wsum = 0.0;
    for (double w : rule.weights)
      wsum += w;
    CHECK_THAT(wsum, WithinRel(3.0, 1e-14));
    const int deg = static_cast<int>(2 * n - 1);
    const double exact = (std::pow(2.0, deg + 1) - std::pow(-1.0, deg + 1)) / (deg + 1);
    CHECK_THAT(integrate(rule, [deg](double x) { return std::pow(x, deg); }), WithinRel(exact, 1e-12));
  }
  CHECK_THAT(integrate(composite_gauss_legendre(8, 16, 0.0, pi), [](double x) { return std::sin(x); }),
             WithinRel(2.0, 1e-14));
}

TEST_CASE("1-D band kernel", "[kernel]") {
  const double omega = 2.5;
  const Kernel h = build_kernel(SupportSet::centered_box({omega}));
  CHECK(h.form() == Kernel::Form::closed_form_sinc);
  CHECK_THAT(h.origin_value(), WithinRel(omega / pi, 1e-15));
  CHECK_THAT(h({0.0}), WithinRel(omega / pi, 1e-15));
  for (double u : {1e-9, 1e-3, 0.37, 1.0, 7.5})
    CHECK_THAT(h({u}), WithinAbs(oracle::sinc_kernel(omega, u), 1e-15));
}

TEST_CASE("scaled kernel h_B(0) = |B| h(0)", "[kernel]") {
  const auto q = SupportSet::centered_box({1.0});
  const Kernel hb = build_kernel(q, LinearMap::diagonal({2.0}));
  CHECK_THAT(hb.origin_value(), WithinRel(2.0 / pi, 1e-15));
  CHECK_THAT(hb({0.0}), WithinRel(2.0 / pi, 1e-15));
}

TEST_CASE("kernels are even", "[kernel][property]") {
  oracle::Gen gen(21);
  const std::vector<SupportSet> qs{
      SupportSet::centered_box({1.0, 2.0}),
      SupportSet::ball({0.0, 0.0}, 1.5),
      SupportSet::omega_sliced(OmegaSlicedSet::cone(pi, {1.0})),
      SupportSet::omega_sliced(OmegaSlicedSet::cone(2.0, {0.5}, 1.0)),
  };
  for (const auto &q : qs) {
    const Kernel h = build_kernel(q);
    for (int t = 0; t < 50; ++t) {
      const double a = gen.uniform(-6, 6), b = gen.uniform(-6, 6);
      CHECK(h({a, b}) == h({-a, -b}));
    }
  }
}

TEST_CASE("origin value is (2 pi)^-N m(Q)", "[kernel]") {
  const auto cone = SupportSet::omega_sliced(OmegaSlicedSet::cone(2.0, {1.0}));
  CHECK_THAT(build_kernel(cone).origin_value(), WithinRel(8.0 / (4 * pi * pi), 1e-12));
  CHECK_THAT(build_kernel(cone)({0.0, 0.0}), WithinRel(8.0 / (4 * pi * pi), 1e-10));
  const auto sph = SupportSet::omega_sliced(OmegaSlicedSet::cone(1.0, {1.0, 1.0}));
  CHECK_THAT(build_kernel(sph)({0.0, 0.0, 0.0}), WithinRel(8.0 / 3.0 / std::pow(2 * pi, 3), 1e-10));
  const auto disk = SupportSet::ball({0.0, 0.0}, 1.3);
  CHECK_THAT(build_kernel(disk).origin_value(), WithinRel(pi * 1.69 / (4 * pi * pi), 1e-15));
}

TEST_CASE("cone kernel matches its closed form", "[kernel][oracle]") {
  const double w = pi, r = 1.0;
  const Kernel h = build_kernel(SupportSet::omega_sliced(OmegaSlicedSet::cone(w, {r})));
  CHECK(h.form() == Kernel::Form::sliced_quadrature);
  CHECK(h.quadrature_nodes() >= 32);
  oracle::Gen gen(31);
  for (int t = 0; t < 200; ++t) {
    const double u0 = gen.uniform(-8, 8), u1 = gen.uniform(-8, 8);
    CHECK_THAT(h({u0, u1}), WithinAbs(oracle::cone_kernel_2d(w, r, u0, u1), 1e-8 * h.origin_value()));
  }
  for (double u0 : {0.0, 0.5, -2.0})
    for (double u1 : {0.0, 1e-7, 1.5})
      CHECK_THAT(h({u0, u1}), WithinAbs(oracle::cone_kernel_2d(w, r, u0, u1), 1e-8 * h.origin_value()));
  // the closed form and a Simpson integral of the slice agree too
  CHECK_THAT(oracle::cone_kernel_2d(w, r, 1.3, -0.7), WithinAbs(oracle::cone_kernel_2d_simpson(w, r, 1.3, -0.7), 1e-12));
}

TEST_CASE("disk kernel matches the Bessel integral", "[kernel][oracle]") {
  const Kernel h = build_kernel(SupportSet::ball({0.0, 0.0}, 2.0));
  for (double s : {0.0, 0.3, 1.0, 2.7}) {
    const double u0 = s * 0.6, u1 = s * 0.8;
    CHECK_THAT(h({u0, u1}), WithinAbs(oracle::disk_kernel(2.0, s), 1e-9));
  }
}

TEST_CASE("3-D ball kernel at small and large offsets", "[kernel]") {
  const double rad = 1.5;
  const Kernel h = build_kernel(SupportSet::ball({0.0, 0.0, 0.0}, rad));
  // (2 pi)^-3 * integral over the ball of cos(s v_1) = (sin x - x cos x) / (2 pi^2 s^3)
  for (double s : {1e-4, 2e-3, 0.5, 3.0}) {
    const double ref = oracle::simpson(
                           [&](double v) { return std::cos(s * v) * pi * (rad * rad - v * v); }, -rad, rad, 1e-14) /
                       std::pow(2 * pi, 3);
    CHECK_THAT(h({s, 0.0, 0.0}), WithinAbs(ref, 1e-12));
  }
}

TEST_CASE("kernel scaling identity for box Q and random diagonal B", "[kernel][property]") {
  oracle::Gen gen(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = gen.integer(1, 3);
    std::vector<double> w(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      w[static_cast<std::size_t>(k)] = gen.uniform(0.2, 4.0);
      d[static_cast<std::size_t>(k)] = gen.uniform(0.2, 4.0) * (gen.uniform(0, 1) < 0.2 ? -1.0 : 1.0);
    }
    const auto q = SupportSet::centered_box(w);
    const LinearMap b = LinearMap::diagonal(d);
    const Kernel hb = build_kernel(q, b), h = build_kernel(q);
    std::vector<double> u(static_cast<std::size_t>(n)), bu(static_cast<std::size_t>(n));
    for (int t = 0; t < 100; ++t) {
      for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] = gen.uniform(-5, 5);
        bu[k] = d[k] * u[k];
      }
      const double lhs = hb(u), rhs = std::abs(b.determinant()) * h(bu);
      CHECK(std::abs(lhs - rhs) <= 1e-9 * std::abs(lhs) + 1e-12);
    }
  }
}

TEST_CASE("kernel of a rotated set uses the transposed map", "[kernel]") {
  const double th = 0.4;
  Eigen::MatrixXd a(2, 2);
  a << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  const LinearMap rot(a);
  const auto q = SupportSet::centered_box({1.0, 2.0});
  const Kernel hr = build_kernel(q, rot), h = build_kernel(q);
  const Eigen::Vector2d u(0.7, -1.1);
  const Eigen::Vector2d v = a.transpose() * u;
  CHECK_THAT(hr({u[0], u[1]}), WithinRel(h({v[0], v[1]}), 1e-14));
}

TEST_CASE("kernel errors", "[kernel]") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(build_kernel(SupportSet::box(BoundingBox{{-inf, inf}})), std::invalid_argument);
  CHECK_THROWS_AS(build_kernel(SupportSet::box(BoundingBox{{0.0, 1.0}})), std::invalid_argument);
  CHECK_THROWS_AS(build_kernel(SupportSet::set_union({SupportSet::centered_box({1.0}), SupportSet::centered_box({2.0})})),
                  std::invalid_argument);
  KernelOptions starved;
  starved.initial_nodes = 2;
  starved.max_nodes = 4;
  starved.tolerance = 1e-14;
  CHECK_THROWS_AS(build_kernel(SupportSet::omega_sliced(OmegaSlicedSet::cone(20.0, {3.0})), starved), NumericalError);
}
