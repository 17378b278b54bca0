#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hombench/dynamics.hpp"
#include "hombench/hom.hpp"

using namespace hombench;
using namespace hombench::hom;

namespace {

EmitterModel cw_emitter() {
  EmitterModel e;
  e.t1_ns = 1.75;
  e.r_cw_per_ns = 0.1;
  e.tau_c_prime_ns = 0.55;
  return e;
}

InterferometerModel mzi(double t1, double t2, double delay = 22.9) {
  InterferometerModel m;
  m.delay_p_ns = delay;
  m.set_bs1(t1);
  m.set_bs2(t2);
  return m;
}

ExcitationConfig pulsed() {
  ExcitationConfig x;
  x.mode = ExcitationMode::pulsed;
  x.pulse_period_ns = 12.5;
  return x;
}

DetectorModel irf(double ps) {
  DetectorModel d;
  d.jitter_fwhm_ps = ps;
  return d;
}

double sum(const CorrelationCurve& c) {
  double s = 0.0;
  for (double v : c.values) s += v;
  return s;
}

}  // namespace

TEST_SUITE("hom") {

TEST_CASE("50:50 CW model reduces to the balanced closed forms") {
  const auto e = cw_emitter();
  const auto m = mzi(0.5, 0.5);
  for (double tau = -40.0; tau <= 40.0; tau += 0.37) {
    const double g = dynamics::cw_g2(e, tau);
    const double side = dynamics::cw_g2(e, tau - 22.9) + dynamics::cw_g2(e, tau + 22.9);
    const double dip = 1.0 - std::exp(-2.0 * std::abs(tau) / 0.55);
    const auto p = cw_hom_pair(e, m, tau);
    CHECK(std::abs(p.perp - (0.5 * g + 0.25 * side)) < 1e-12);
    CHECK(std::abs(p.parallel - (0.5 * g + 0.25 * side * dip)) < 1e-12);
  }
}

TEST_CASE("CW reference values") {
  const auto e = cw_emitter();
  const auto p0 = cw_hom_pair(e, mzi(0.5, 0.5), 0.0);
  CHECK(p0.perp == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(p0.parallel == 0.0);
  CHECK(cw_hom_pair(e, mzi(0.5, 0.5), 22.9).perp == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(cw_hom_pair(e, mzi(0.5, 0.5), -22.9).perp == doctest::Approx(0.75).epsilon(1e-6));

  const double tail = dynamics::cw_g2(e, 22.9);
  const double expected = 4.0 * 0.25 * 0.75 * (0.48 * 0.48 + 0.52 * 0.52) * tail;
  CHECK(cw_hom_pair(e, mzi(0.25, 0.48), 0.0).perp == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.3756).epsilon(1e-5));
}

TEST_CASE("coalescence only removes coincidences") {
  auto e = cw_emitter();
  for (double f : {0.0, 0.3, 1.0}) {
    e.f_overlap = f;
    for (double tau = -30.0; tau <= 30.0; tau += 0.13) {
      const auto p = cw_hom_pair(e, mzi(0.3, 0.6), tau);
      CHECK(p.parallel <= p.perp + 1e-15);
      const auto q = pulsed_hom_pair(e, mzi(0.3, 0.6, 12.5), pulsed(), tau);
      CHECK(q.parallel <= q.perp + 1e-15);
    }
  }
}

TEST_CASE("pre-convolution visibility at zero delay is exactly one") {
  const auto e = cw_emitter();
  for (double t1 : {0.1, 0.25, 0.5, 0.9}) {
    for (double t2 : {0.2, 0.48, 0.7}) {
      const auto p = cw_hom_pair(e, mzi(t1, t2), 0.0);
      CHECK(*visibility(p.perp, p.parallel) == 1.0);
    }
  }
}

TEST_CASE("swapping T2 and R2 mirrors the side peaks") {
  const auto e = cw_emitter();
  for (double tau = -30.0; tau <= 30.0; tau += 0.7) {
    CHECK(std::abs(cw_hom_pair(e, mzi(0.25, 0.48), tau).perp -
                   cw_hom_pair(e, mzi(0.25, 0.52), -tau).perp) < 1e-14);
  }
}

TEST_CASE("pulsed model") {
  EmitterModel e;
  e.t1_ns = 1.75;
  e.tau_e_ns = 0.3;
  e.tau_c_prime_ns = 0.95;
  const auto x = pulsed();
  const auto even = mzi(0.5, 0.5, 12.5);
  // only the same-arm term survives at zero delay
  CHECK(pulsed_hom_pair(e, even, x, 0.0).parallel ==
        doctest::Approx(0.5 * dynamics::pulsed_g2(e, x, 0.0)).epsilon(1e-12));
  for (double tau = -20.0; tau <= 20.0; tau += 0.31) {
    const auto p = pulsed_hom_pair(e, even, x, tau);
    CHECK(std::abs(p.perp - p.parallel - 0.5 * std::exp(-2.0 * std::abs(tau) / 0.95)) < 1e-12);
  }
  e.f_overlap = 0.0;
  for (double tau = -20.0; tau <= 20.0; tau += 0.31) {
    const auto p = pulsed_hom_pair(e, mzi(0.27, 0.35, 12.5), x, tau);
    CHECK(p.parallel == p.perp);
  }
  CHECK_THROWS_AS(pulsed_hom_pair(e, even, ExcitationConfig{}, 0.0), std::invalid_argument);
}

TEST_CASE("pulsed parallel uses its own coefficients") {
  EmitterModel e;
  e.t1_ns = 1.75;
  e.tau_e_ns = 0.1;
  e.tau_c_prime_ns = 0.95;
  const auto perp = mzi(0.27, 0.35, 12.5);
  const auto par = mzi(0.31, 0.5, 12.5);
  const auto x = pulsed();
  const auto w = path_weights(par);
  const dynamics::PulsedCorrelation g(e, x);
  for (double tau : {-3.0, 0.0, 0.5, 12.5}) {
    const double expected = w.same * g(tau) + w.minus * g(tau - 12.5) + w.plus * g(tau + 12.5) -
                            (w.minus * g(-12.5) + w.plus * g(12.5)) * std::exp(-2.0 * std::abs(tau) / 0.95);
    CHECK(pulsed_hom_pair(e, perp, par, x, tau).parallel == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("visibility definition") {
  CHECK(*visibility(0.5, 0.5) == 0.0);
  CHECK(*visibility(0.5, 0.0) == 1.0);
  CHECK(*visibility(0.5, 0.4) == doctest::Approx(0.2));
  CHECK_FALSE(visibility(0.0, 0.0).has_value());

  auto perp = make_curve(0.0, 1.0, 3, CurveKind::g2_perp);
  auto par = perp;
  perp.values = {1.0, 0.0, 0.5};
  par.values = {0.5, 0.0, 0.5};
  const auto v = visibility(perp, par);
  REQUIRE(v.size() == 2);
  CHECK(v.delays == std::vector<double>{0.0, 2.0});
  CHECK(v.values == std::vector<double>{0.5, 0.0});
}

TEST_CASE("detector response convolution") {
  auto rect = make_symmetric_curve(5.0, 0.01, CurveKind::g2);
  for (std::size_t i = 0; i < rect.size(); ++i) rect.values[i] = std::abs(rect.delays[i]) < 0.5 ? 1.0 : 0.0;

  const auto same = convolve_irf(rect, irf(0.0));
  CHECK(same.values == rect.values);

  std::vector<std::string> warnings;
  const auto smooth = convolve_irf(rect, irf(100.0), &warnings);
  CHECK(warnings.empty());
  CHECK(std::abs(sum(smooth) - sum(rect)) < 1e-6 * sum(rect));
  CHECK(smooth.values[rect.size() / 2] == doctest::Approx(1.0));
  CHECK(smooth.values[rect.size() / 2 + 50] == doctest::Approx(0.5).epsilon(0.05));

  auto coarse = make_symmetric_curve(5.0, 0.1, CurveKind::g2);
  convolve_irf(coarse, irf(100.0), &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0] == "under-resolved kernel");
}

TEST_CASE("convolution is linear") {
  auto a = make_symmetric_curve(3.0, 0.01, CurveKind::g2);
  auto b = a;
  auto ab = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a.delays[i];
    a.values[i] = std::exp(-std::abs(t));
    b.values[i] = t > 0.0 ? 1.0 : 0.2;
    ab.values[i] = 2.5 * a.values[i] + b.values[i];
  }
  const auto ca = convolve_irf(a, irf(100.0));
  const auto cb = convolve_irf(b, irf(100.0));
  const auto cab = convolve_irf(ab, irf(100.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(cab.values[i] - (2.5 * ca.values[i] + cb.values[i])) < 1e-12);
  }
}

TEST_CASE("fig3 visibility after the 100 ps response") {
  const auto e = cw_emitter();
  const HomModel model(e, mzi(0.25, 0.48), ExcitationConfig{});
  const double sigma = fwhm_to_sigma(0.1);
  const std::vector<double> cusps{-22.9, 0.0, 22.9};
  const double perp = convolve_point([&](double t) { return model(t).perp; }, 0.0, sigma, cusps);
  const double par = convolve_point([&](double t) { return model(t).parallel; }, 0.0, sigma, cusps);
  CHECK(*visibility(perp, par) == doctest::Approx(0.85).epsilon(0.03 / 0.85));

  const auto grid = make_symmetric_curve(2.0, 0.01, CurveKind::g2);
  const auto [cp, cq] = sample_hom_points(model, grid, irf(100.0));
  const std::size_t mid = grid.size() / 2;
  CHECK(cp.values[mid] == doctest::Approx(perp).epsilon(1e-12));
  CHECK(cq.values[mid] == doctest::Approx(par).epsilon(1e-12));
}

TEST_CASE("bin-averaged sampling") {
  const auto e = cw_emitter();
  const HomModel model(e, mzi(0.25, 0.48), ExcitationConfig{});
  const auto grid = make_symmetric_curve(1.0, 0.1, CurveKind::g2);
  const auto c = sample_model([&](double t) { return model.g2(t); }, grid, DetectorModel{}, 64);
  // exact bin average of 1 - exp(-k|t|) over [0.05, 0.15]
  const double k = 1.0 / 1.75 + 0.1;
  const double exact = 1.0 - (std::exp(-k * 0.05) - std::exp(-k * 0.15)) / (k * 0.1);
  CHECK(c.values[grid.size() / 2 + 1] == doctest::Approx(exact).epsilon(1e-5));
}

TEST_CASE("integrated visibility") {
  EmitterModel e;
  e.t1_ns = 1.75;
  e.tau_e_ns = 1.5;
  e.tau_c_prime_ns = 0.95;
  const auto x = pulsed();
  const auto perp_mzi = mzi(0.27, 0.35, 12.5);
  const auto par_mzi = mzi(0.31, 0.5, 12.5);
  const HomModel model(e, perp_mzi, par_mzi, x);
  const auto grid = make_symmetric_curve(30.0, 0.05, CurveKind::g2);
  const auto [perp, par] = sample_hom(model, grid, irf(100.0));

  CHECK(integrated_visibility(perp, perp, x, {}, std::nullopt).value == 0.0);

  const auto raw = integrated_visibility(perp, par, x, {}, std::nullopt);
  CHECK(raw.applied.empty());
  CHECK(raw.perp_integral == doctest::Approx(window_sum(perp, -6.25, 6.25)));

  CHECK_THROWS_WITH_AS(integrated_visibility(perp, par, x, {true, false}, std::nullopt),
                       doctest::Contains("missing fit parameters"), std::invalid_argument);
  const FittedHomModel fitted{e, perp_mzi, par_mzi, irf(100.0)};
  const auto both = integrated_visibility(perp, par, x, {true, true}, fitted);
  CHECK(both.applied == std::vector<std::string>{"side-peaks", "rebalance"});
  CHECK(both.value > raw.value);

  const auto narrow = make_symmetric_curve(5.0, 0.05, CurveKind::g2);
  CHECK_THROWS_AS(integrated_visibility(narrow, narrow, x, {}, std::nullopt), std::invalid_argument);
  CHECK_THROWS_AS(integrated_visibility(perp, par, ExcitationConfig{}, {}, std::nullopt),
                  std::invalid_argument);
}

TEST_CASE("window sum weights partial bins") {
  auto c = make_curve(0.0, 1.0, 5, CurveKind::g2);
  c.values = {1, 1, 1, 1, 1};
  CHECK(window_sum(c, -0.5, 4.5) == doctest::Approx(5.0));
  CHECK(window_sum(c, 0.0, 1.0) == doctest::Approx(1.0));
  CHECK(window_sum(c, 0.25, 0.5) == doctest::Approx(0.25));
}

TEST_CASE("half-wave-plate dependence") {
  const auto e = cw_emitter();
  const auto m = mzi(0.25, 0.48);
  const auto d = irf(100.0);
  const double v0 = hwp_visibility(e, m, d, 0.0);
  CHECK(v0 == doctest::Approx(0.856).epsilon(1e-3));
  CHECK(std::abs(hwp_visibility(e, m, d, 45.0)) < 1e-12);
  CHECK(hwp_visibility(e, m, d, 22.5) == doctest::Approx(0.5 * v0).epsilon(1e-12));
  for (double phi : {10.0, 33.0, 70.0}) {
    CHECK(hwp_visibility(e, m, d, phi + 90.0) == doctest::Approx(hwp_visibility(e, m, d, phi)).epsilon(1e-12));
  }
  CHECK(effective_overlap(0.8, 0.0) == 0.8);
}

}
