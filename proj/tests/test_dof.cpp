// SPDX-License-Identifier: Apache-2.0

#include "dofkit/dof.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
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
} // namespace

TEST_CASE("n-widths are square roots of eigenvalues", "[dof]") {
  const auto s = spectrum_of({1.0, 0.25, 0.04, 0.0});
  CHECK(n_width(s, 0) == 1.0);
  CHECK(n_width(s, 1) == 0.5);
  CHECK_THAT(n_width(s, 2), WithinRel(0.2, 1e-15));
  CHECK(n_width(s, 3) == 0.0);
  CHECK_THROWS_AS(n_width(s, 4), std::out_of_range);
  CHECK(n_width_curve(s) == std::vector<double>{1.0, 0.5, n_width(s, 2), 0.0});
}

TEST_CASE("dof_at_accuracy picks the first width at or below eps", "[dof]") {
  const auto s = spectrum_of({0.9, 0.8, 0.7, 0.6, 0.5, 0.25, 0.1});
  CHECK(dof_at_accuracy(s, 0.5) == 5);    // 0.25 <= 0.25 at n = 5
  CHECK(dof_at_accuracy(s, 0.49) == 6);
  CHECK(dof_at_accuracy(s, 0.99) == 0);
  CHECK(dof_at_accuracy(s, 0.1) == 7);
  CHECK_THROWS_AS(dof_at_accuracy(spectrum_of({0.9, 0.8}, false), 0.1), NumericalError);
  CHECK_THROWS_AS(dof_at_accuracy(s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(dof_at_accuracy(s, 1.0), std::invalid_argument);
}

TEST_CASE("dof_at_accuracy agrees with counting eigenvalues above eps^2", "[dof][property]") {
  oracle::Gen gen(11);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> ev(static_cast<std::size_t>(gen.integer(1, 40)));
    for (double &v : ev)
      v = gen.uniform(0, 1);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    const auto s = spectrum_of(ev);
    const double eps = gen.uniform(0.05, 0.95);
    std::size_t above = 0;
    for (double v : ev)
      above += v > eps * eps ? 1 : 0;
    CHECK(dof_at_accuracy(s, eps) == above);
    const auto widths = n_width_curve(s);
    for (std::size_t n = 1; n < widths.size(); ++n)
      CHECK(widths[n] <= widths[n - 1]);
  }
}

TEST_CASE("closed-form leading terms", "[dof]") {
  CHECK_THAT(dof_circular(pi, 4.0, 1.0), WithinRel(4.0 * pi, 1e-12));
  CHECK_THAT(dof_circular(2.0, 3.0, 0.5), WithinRel(6.0 / pi, 1e-12));
  CHECK_THAT(dof_spherical(pi, 1.0, 1.0), WithinRel(4.0 * pi / 3.0, 1e-12));
  CHECK_THAT(dof_spherical(2.0, 3.0, 1.5), WithinRel(4 * pi * 2.25 * 8 * 3 / (3 * pi * pi * pi), 1e-12));
  CHECK_THAT(dof_rotational(4 * pi * 2.0 * 2.0, 1.7, 2.1), WithinRel(dof_spherical(1.7, 2.1, 2.0), 1e-12));
  CHECK(time_bandwidth_product(10 * pi, 1.0) == 10.0);
  CHECK(space_wavenumber_product(3.0, 1.0) == 6.0);
  CHECK(time_bandwidth_product(0.0, 5.0) == 0.0);
  CHECK(dof_circular(0.0, 1.0, 1.0) == 0.0);
  CHECK_THROWS_AS(dof_circular(-1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(dof_spherical(1.0, -1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(dof_rotational(-1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(dof_circular(std::numeric_limits<double>::quiet_NaN(), 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("frequency-integrated heuristic matches the closed forms", "[dof][property]") {
  for (int i = 0; i < 10; ++i) {
    const double omega = 0.3 + 0.7 * i, duration = 1.0 + 0.25 * i, r = 0.5 + 0.1 * i;
    for (const auto &g : {CutGeometry::circular(r), CutGeometry::spherical(r), CutGeometry::rotational(3.0 * r)}) {
      const double h = heuristic_dof(g, omega, duration), c = closed_form_dof(g, omega, duration);
      CHECK(std::abs(h - c) <= 1e-8 * std::max(1.0, std::abs(c)));
    }
  }
  CHECK(heuristic_dof(CutGeometry::circular(1.0), 2.0, 2.0, 1.0) == 0.0);
  CHECK_THROWS_AS(heuristic_dof(CutGeometry::circular(1.0), 3.0, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("a sphere as a surface of revolution", "[dof]") {
  const double r = 1.3;
  const auto sphere = CutGeometry::spherical(r);
  const auto rot = CutGeometry::rotational(sphere.area());
  CHECK_THAT(closed_form_dof(rot, 2.0, 3.0), WithinRel(closed_form_dof(sphere, 2.0, 3.0), 1e-14));
  CHECK_THAT(CutGeometry::circular(r).area(), WithinRel(2 * pi * r, 1e-15));
}

TEST_CASE("modulated signals", "[dof]") {
  const auto circ = dof_modulated(pi, 9.5, 10.5, CutGeometry::circular(1.0));
  CHECK_THAT(circ.leading_term, WithinRel(20.0, 1e-14));
  CHECK(circ.delta == 0.0);
  CHECK(circ.bandwidth == 1.0);
  CHECK(circ.carrier == 10.0);
  CHECK_THAT(circ.density, WithinRel(20.0, 1e-14));

  const auto sph = dof_modulated(pi, 9.5, 10.5, CutGeometry::spherical(1.0));
  CHECK_THAT(sph.delta, WithinRel(1.0 / 1200.0, 1e-12));
  // 4 pi r^2 wc^2 / pi^2 with r = 1, wc = 10
  CHECK_THAT(sph.density, WithinRel(400.0 / pi, 1e-12));
  CHECK_THAT(sph.leading_term, WithinRel(400.0 / pi * (1.0 + 1.0 / 1200.0), 1e-12));

  // the modulated term is the heuristic integrated over the band
  oracle::Gen gen(17);
  for (int t = 0; t < 100; ++t) {
    const double w1 = gen.uniform(0.1, 5.0), w2 = w1 + gen.uniform(0.01, 4.0), dur = gen.uniform(0.2, 4.0);
    const double size = gen.uniform(0.2, 3.0);
    for (const auto &g : {CutGeometry::circular(size), CutGeometry::spherical(size), CutGeometry::rotational(size)}) {
      const double want = heuristic_dof(g, w1, w2, dur);
      CHECK(std::abs(dof_modulated(dur, w1, w2, g).leading_term - want) <= 1e-10 * want);
    }
  }
  CHECK_THROWS_AS(dof_modulated(1.0, 2.0, 1.0, CutGeometry::circular(1.0)), std::invalid_argument);
  CHECK_THROWS_AS(dof_modulated(-1.0, 1.0, 2.0, CutGeometry::circular(1.0)), std::invalid_argument);
}

TEST_CASE("reports compare empirical and closed-form counts", "[dof]") {
  const auto s = spectrum_of({0.99, 0.9, 0.6, 0.4, 0.1, 0.01});
  const auto r = empirical_vs_closed_form(s, 4.0, std::sqrt(0.5), Regime::large_domain);
  CHECK(r.has_empirical);
  CHECK(r.dof_empirical == 3);
  CHECK(r.count_at_epsilon == 2);
  CHECK_THAT(r.relative_gap, WithinRel(-0.25, 1e-15));
  CHECK(r.n_width_curve.size() == 6);
  CHECK(std::string(to_string(r.regime)) == "large_domain");

  const auto c = closed_form_report(12.0, 0.5, Regime::wideband);
  CHECK_FALSE(c.has_empirical);
  CHECK(c.dof_closed_form == 12.0);

  CHECK(relative_gap(0.0, 0.0) == 0.0);
  CHECK(std::isinf(relative_gap(1.0, 0.0)));
}
