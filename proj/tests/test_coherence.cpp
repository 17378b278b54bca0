#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "hombench/coherence.hpp"

using namespace hombench;
using namespace hombench::coherence;
using std::numbers::pi;

namespace {

std::vector<double> grid(double half, double step) {
  std::vector<double> g;
  const long n = std::lround(half / step);
  for (long k = -n; k <= n; ++k) g.push_back(k * step);
  return g;
}

/// FWHM of a sampled unit-peak curve by linear interpolation at half height.
double measured_fwhm(const CorrelationCurve& c) {
  std::size_t peak = 0;
  for (std::size_t i = 0; i < c.size(); ++i) if (c.values[i] > c.values[peak]) peak = i;
  const double half = 0.5 * c.values[peak];
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && c.values[lo] > half) --lo;
  while (hi + 1 < c.size() && c.values[hi] > half) ++hi;
  auto cross = [&](std::size_t a, std::size_t b) {
    return c.delays[a] + (half - c.values[a]) * (c.delays[b] - c.delays[a]) / (c.values[b] - c.values[a]);
  };
  return cross(hi - 1, hi) - cross(lo, lo + 1);
}

std::vector<double> peaks(const CorrelationCurve& c) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < c.size(); ++i) {
    if (c.values[i] > c.values[i - 1] && c.values[i] >= c.values[i + 1]) out.push_back(c.delays[i]);
  }
  return out;
}

}  // namespace

TEST_SUITE("coherence") {

TEST_CASE("fringe visibility") {
  const CoherenceModel coh{0.8, 1.2, 0.0};
  CHECK(g1_fringe(coh, 0.0) == 1.0);
  CHECK(g1_fringe(CoherenceModel{0.5, 1e9, 0.0}, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  double prev = 2.0;
  for (double d = 0.0; d <= 3.0; d += 0.01) {
    CHECK(g1_fringe(coh, d) == g1_fringe(coh, -d));
    CHECK(g1_fringe(coh, d) <= prev);
    prev = g1_fringe(coh, d);
  }
  const CoherenceModel beat{0.8, 1.2, pi * 3.1};
  CHECK(g1_fringe(beat, 0.5 * pi / beat.omega_s_rad_per_ns) < 1e-15);
}

TEST_CASE("Voigt FWHM") {
  CHECK(voigt_fwhm(1.0, 0.0) == doctest::Approx(1.00083258795408464).epsilon(1e-15));
  CHECK(voigt_fwhm(0.0, 1.0) == 1.0);
  CHECK(voigt_fwhm(0.2, 0.3) == doctest::Approx(0.421133729484753038).epsilon(1e-15));
  CHECK_THROWS_WITH_AS(voigt_fwhm(0.0, 0.0), "degenerate lineshape", std::invalid_argument);
}

TEST_CASE("width conversions round-trip") {
  for (double t : {0.05, 0.8, 3.5, 120.0}) {
    CHECK(t2_from_lorentzian_fwhm(voigt_fwhm(lorentzian_fwhm(t), 0.0) /
                                  voigt_fwhm(1.0, 0.0)) == doctest::Approx(t).epsilon(1e-9));
    CHECK(t_g_from_gaussian_fwhm(voigt_fwhm(0.0, gaussian_fwhm(t))) == doctest::Approx(t).epsilon(1e-9));
  }
}

TEST_CASE("coherence time") {
  // 30-digit evaluation of the positive root
  CHECK(coherence_time(CoherenceModel{0.8, 1.2, 0.0}) ==
        doctest::Approx(0.542843758556252239).epsilon(1e-14));
  CHECK(coherence_time(CoherenceModel{0.8, 1e7, 0.0}) == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(coherence_time(CoherenceModel{1e9, 1.2, 0.0}) ==
        doctest::Approx(1.2 * std::sqrt(2.0 / pi)).epsilon(1e-6));
  // tau_c is the 1/e decay time of the fringe envelope
  for (const CoherenceModel c : {CoherenceModel{0.8, 1.2, 0.0}, CoherenceModel{0.2, 3.0, 0.0},
                                 CoherenceModel{5.0, 0.4, 0.0}}) {
    CHECK(g1_fringe(c, coherence_time(c)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  CHECK(coherence_time(CoherenceModel{0.5, 1.0, 0.0}) > 0.0);
}

TEST_CASE("transform limit") {
  CHECK(transform_limit_linewidth(1.75) == doctest::Approx(0.0909456817667973).epsilon(1e-14));
  CHECK(transform_limit_linewidth(1.0 / (2.0 * pi)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(transform_limit_linewidth(1e300) < 1e-299);
}

TEST_CASE("Faddeeva function against scipy wofz") {
  struct Case {
    std::complex<double> z, w;
  };
  const Case cases[] = {
      {{0.5, 0.5}, {0.5331567079121748, 0.2304882313844585}},
      {{2.0, 0.1}, {0.040201398161451296, 0.3315826873345632}},
      {{-1.5, 2.0}, {0.18333476238115004, -0.11929823300627299}},
      {{0.1, 0.001}, {0.988944841841795, 0.11189087688601074}},
      {{5.0, 5.0}, {0.05696543988817737, 0.05583874277539143}},
      {{3.0, -0.5}, {-0.037440117100424296, 0.19302847942731746}},
      {{10.0, 0.01}, {5.728711622490079e-05, 0.05670533605480961}},
  };
  for (const auto& c : cases) {
    const auto w = faddeeva(c.z);
    CHECK(std::abs(w - c.w) < 1e-12 * std::max(1.0, std::abs(c.w)) + 1e-13);
  }
}

TEST_CASE("Voigt profile against scipy voigt_profile") {
  CHECK(voigt_profile(0.0, 1.0, 1.0) == doctest::Approx(0.4491109392515199).epsilon(1e-11));
  CHECK(voigt_profile(0.3, 0.2, 0.3) == doctest::Approx(0.513894102633).epsilon(1e-10));
  CHECK(voigt_profile(1.5, 0.5, 0.1) == doctest::Approx(0.03448976730135187).epsilon(1e-10));
  CHECK(voigt_profile(-0.7, 0.05, 0.4) == doctest::Approx(0.021099876113184153).epsilon(1e-10));
  CHECK(voigt_profile(0.0, 2.0, 0.0) == doctest::Approx(1.0 / pi));
}

TEST_CASE("spectrum model") {
  const auto g = grid(6.0, 0.002);
  SUBCASE("single Voigt peak of unit height") {
    const auto s = spectrum_model(CoherenceModel{0.8, 1.2, 0.0}, g);
    CHECK(s.kind == CurveKind::spectrum);
    CHECK(peaks(s).size() == 1);
    CHECK(s.values[g.size() / 2] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("pure Lorentzian width") {
    LineShape l;
    l.delta_l_ghz = lorentzian_fwhm(0.8);
    const auto s = spectrum_model(l, g);
    CHECK(measured_fwhm(s) == doctest::Approx(1.0 / (pi * 0.8)).epsilon(1e-4));
  }
  SUBCASE("numerical FWHM matches the Voigt approximation") {
    for (const auto& [dl, dg] : {std::pair{0.2, 0.3}, std::pair{0.5, 0.5}, std::pair{0.4, 0.1}}) {
      LineShape l;
      l.delta_l_ghz = dl;
      l.delta_g_ghz = dg;
      CHECK(measured_fwhm(spectrum_model(l, g)) == doctest::Approx(voigt_fwhm(dl, dg)).epsilon(0.02));
    }
  }
  SUBCASE("doublet separation") {
    const auto s = spectrum_model(CoherenceModel{1.5, 2.5, pi * 3.1}, g);
    const auto p = peaks(s);
    REQUIRE(p.size() == 2);
    CHECK(p[1] - p[0] == doctest::Approx(3.1).epsilon(2e-3));
    double top = 0.0;
    for (double v : s.values) top = std::max(top, v);
    CHECK(top <= 1.0 + 1e-12);
    CHECK(top > 0.999);
  }
  SUBCASE("non-uniform grid is rejected") {
    const std::vector<double> bad{0.0, 0.1, 0.3};
    CHECK_THROWS_AS(spectrum_model(CoherenceModel{}, bad), std::invalid_argument);
  }
}

TEST_CASE("etalon") {
  const Etalon reference;
  CHECK(etalon_transmission(0.0, reference) == 1.0);
  CHECK(etalon_transmission(0.125, reference) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(etalon_transmission(-0.125, reference) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(etalon_transmission(40.75, reference) == doctest::Approx(1.0).epsilon(1e-12));

  const auto g = grid(6.0, 0.01);
  const auto s = spectrum_model(CoherenceModel{1.5, 2.5, pi * 3.1}, g);
  const auto scanned = etalon_convolve(s, reference);
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) a += s.values[i], b += scanned.values[i];
  CHECK(std::abs(a - b) < 1e-6 * a);
  CHECK(peaks(scanned).size() == 2);

  const auto wide = grid(21.0, 0.1);
  CHECK_THROWS_WITH_AS(etalon_convolve(spectrum_model(CoherenceModel{}, wide), reference), "order overlap",
                       std::invalid_argument);
  CHECK_THROWS_AS(etalon_transmission(0.0, Etalon{50.0, 40.0}), std::invalid_argument);
}

}
