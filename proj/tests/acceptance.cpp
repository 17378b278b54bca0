// Acceptance checks. Usage: hombench_acceptance <criterion>...
// Prints one PASS/FAIL line per check; exits non-zero when any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "hombench/cli.hpp"
#include "hombench/coherence.hpp"
#include "hombench/dynamics.hpp"
#include "hombench/fitting.hpp"
#include "hombench/hom.hpp"
#include "hombench/montecarlo.hpp"
#include "support.hpp"

using namespace hombench;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class Report {
 public:
  explicit Report(std::string criterion) : criterion_(std::move(criterion)) {}

  /// |value - target| <= tol.
  void near(const std::string& name, double value, double target, double tol) {
    line(name, std::abs(value - target) <= tol,
         "value=" + fmt(value) + " target=" + fmt(target) + " tol=" + fmt(tol));
  }
  /// |value/target - 1| <= rel.
  void relative(const std::string& name, double value, double target, double rel) {
    line(name, std::abs(value / target - 1.0) <= rel,
         "value=" + fmt(value) + " target=" + fmt(target) + " rel_tol=" + fmt(rel));
  }
  void below(const std::string& name, double value, double limit) {
    line(name, value < limit, "value=" + fmt(value) + " limit<" + fmt(limit));
  }
  void at_least(const std::string& name, double value, double limit) {
    line(name, value >= limit, "value=" + fmt(value) + " limit>=" + fmt(limit));
  }
  void truth(const std::string& name, bool ok, const std::string& detail) { line(name, ok, detail); }

  int failures() const { return failures_; }

 private:
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
  }
  void line(const std::string& name, bool ok, const std::string& detail) {
    if (!ok) ++failures_;
    std::cout << (ok ? "PASS " : "FAIL ") << criterion_ << " " << name << " " << detail << "\n";
  }

  std::string criterion_;
  int failures_ = 0;
};

// ------------------------------------------------------------------ 1

void fig3_reconstruction(Report& rep) {
  const auto t0 = Clock::now();
  const auto m = cli::fig3_model();
  const hom::HomModel model(m.emitter, m.mzi, m.excitation);
  const auto pre = model(0.0);
  rep.near("pre_convolution_v0", *hom::visibility(pre.perp, pre.parallel), 1.0, 1e-9);
  const double sigma = hom::fwhm_to_sigma(m.detector.jitter_fwhm_ns());
  const auto cusps = model.cusps(-1.0, 1.0);
  const double gp = hom::convolve_point([&](double t) { return model(t).perp; }, 0.0, sigma, cusps);
  const double gq = hom::convolve_point([&](double t) { return model(t).parallel; }, 0.0, sigma, cusps);
  rep.near("irf_v0", *hom::visibility(gp, gq), 0.85, 0.03);
  rep.below("runtime_s", seconds_since(t0), 1.0);
}

// ------------------------------------------------------------------ 2

void fig6_numbers(Report& rep) {
  const auto t0 = Clock::now();
  const auto quasi = cli::fig6_row("quasi_resonant", 0.95, 1.5);
  const auto above = cli::fig6_row("above_band", 0.6, 5.0);
  rep.near("quasi_resonant_raw_pts", 100.0 * quasi.raw, 17.1, 2.0);
  rep.near("quasi_resonant_corrected_pts", 100.0 * quasi.corrected, 19.2, 2.0);
  rep.near("above_band_corrected_pts", 100.0 * above.corrected, 9.2, 2.0);
  rep.below("runtime_s", seconds_since(t0), 5.0);
}

// ------------------------------------------------------------------ 3

struct OracleCase {
  std::string name;
  mc::SimConfig config;
  double bin;
  double span;
};

/// Simpson average of `fn` over the bin centred at `x`.
double bin_integral(const std::function<double(double)>& fn, double x, double w) {
  constexpr int m = 64;
  const double h = w / m, a = x - 0.5 * w;
  double s = fn(a) + fn(a + w);
  for (int k = 1; k < m; ++k) s += (k % 2 ? 4.0 : 2.0) * fn(a + k * h);
  return s * h / 3.0;
}

void oracle_equivalence(Report& rep) {
  const auto t0 = Clock::now();
  std::vector<OracleCase> cases;
  {
    mc::SimConfig c;
    c.emitter.t1_ns = 1.75;
    c.emitter.r_cw_per_ns = 0.1;
    c.emitter.tau_c_prime_ns = 0.55;
    c.mzi.delay_p_ns = 22.9;
    c.mzi.set_bs1(0.25);
    c.mzi.set_bs2(0.48);
    c.duration_ns = 1.2e8;
    c.seed = 7;
    for (auto [name, pol, layout] :
         {std::tuple{"cw_parallel", mc::Polarization::co, mc::Layout::hom},
          std::tuple{"cw_perp", mc::Polarization::cross, mc::Layout::hom},
          std::tuple{"cw_g2", mc::Polarization::co, mc::Layout::hbt}}) {
      c.polarization = pol;
      c.layout = layout;
      ++c.seed;
      cases.push_back({name, c, 0.05, 30.0});
    }
  }
  {
    mc::SimConfig c;
    c.emitter.t1_ns = 1.75;
    c.emitter.tau_e_ns = 0.1;
    c.emitter.tau_c_prime_ns = 0.95;
    c.excitation.mode = ExcitationMode::pulsed;
    c.mzi.delay_p_ns = 12.5;
    c.mzi.set_bs1(0.27);
    c.mzi.set_bs2(0.35);
    c.pulses = 10'000'000;
    c.seed = 11;
    for (auto [name, pol, layout] :
         {std::tuple{"pulsed_parallel", mc::Polarization::co, mc::Layout::hom},
          std::tuple{"pulsed_perp", mc::Polarization::cross, mc::Layout::hom},
          std::tuple{"pulsed_g2", mc::Polarization::co, mc::Layout::hbt}}) {
      c.polarization = pol;
      c.layout = layout;
      ++c.seed;
      cases.push_back({name, c, 0.2, 40.0});
    }
  }

  for (const auto& oc : cases) {
    const auto& c = oc.config;
    const auto r = mc::run_simulation(c);
    rep.at_least(oc.name + "_emitted", static_cast<double>(r.emitted), 1e7);
    const auto h = mc::histogram_coincidences(r.streams.start, r.streams.stop, oc.bin, oc.span);
    const hom::HomModel model(c.emitter, c.mzi, c.excitation);
    const bool hbt = c.layout == mc::Layout::hbt;
    std::function<double(double)> fn;
    if (hbt) {
      fn = [&](double t) { return model.g2(t); };
    } else if (c.polarization == mc::Polarization::cross) {
      fn = [&](double t) { return model(t).perp; };
    } else {
      fn = [&](double t) { return model(t).parallel; };
    }
    // Expected ordered (start, stop) pairs per bin.
    const double route = hbt ? c.mzi.t_bs1 * c.mzi.r_bs1 : 0.25;
    double scale = 0.0;
    if (c.excitation.mode == ExcitationMode::cw) {
      const double n = static_cast<double>(r.emitted);
      scale = n * n / c.duration_ns * route;
    } else {
      const dynamics::PulsedCorrelation pc(c.emitter, c.excitation);
      scale = static_cast<double>(c.pulses) * pc.pair_density_scale() * route;
    }
    int within = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double expected = scale * bin_integral(fn, h.delays[i], oc.bin);
      const double se = std::sqrt(std::max(expected, 1.0));
      if (std::abs(h.values[i] - expected) <= 3.0 * se) ++within;
    }
    rep.at_least(oc.name + "_bins_within_3se", static_cast<double>(within) / h.size(), 0.99);
  }
  rep.below("runtime_s", seconds_since(t0), 300.0);
}

// ------------------------------------------------------------------ 4

void pulsed_dual_construction(Report& rep) {
  const auto t0 = Clock::now();
  EmitterModel e;
  e.t1_ns = 1.75;
  e.tau_e_ns = 0.3;
  ExcitationConfig x;
  x.mode = ExcitationMode::pulsed;
  x.pulse_period_ns = 12.5;

  // Self-convolution of the sampled emission profile (Simpson, h = 2 ps).
  constexpr double h = 0.002, step = 0.1, reach = 70.0;
  const int stride = static_cast<int>(std::lround(step / h));
  const int n_t = static_cast<int>(std::lround(2.0 * reach / h));  // even
  std::vector<double> p(n_t + 1);
  for (int i = 0; i <= n_t; ++i) p[i] = dynamics::pulsed_emission_profile(e, i * h);
  const int n_lag = static_cast<int>(std::lround(reach / step));
  std::vector<double> c(n_lag + 1);
  for (int k = 0; k <= n_lag; ++k) {
    const int shift = k * stride;
    const int n = n_t - shift - ((n_t - shift) % 2);
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      s += w * p[i] * p[i + shift];
    }
    c[k] = s * h / 3.0;
  }
  auto autocorr = [&](int lag) { return std::abs(lag) <= n_lag ? c[std::abs(lag)] : 0.0; };
  const int period = static_cast<int>(std::lround(x.pulse_period_ns / step));
  auto numeric_raw = [&](int k) {
    double s = 0.0;
    for (int n = -8; n <= 8; ++n) {
      if (n != 0) s += autocorr(k - n * period);
    }
    return s;
  };
  const double norm = numeric_raw(period);
  const dynamics::PulsedCorrelation analytic(e, x);
  double worst = 0.0;
  for (int k = -400; k <= 400; ++k) {
    worst = std::max(worst, std::abs(numeric_raw(k) / norm - analytic(k * step)));
  }
  rep.below("max_abs_difference", worst, 1e-4);
  rep.below("runtime_s", seconds_since(t0), 1.0);
}

// ------------------------------------------------------------------ 5

void reservoir(Report& rep) {
  EmitterModel e;
  e.t1_ns = 1.75;
  e.tau_e_ns = 0.3;
  ExcitationConfig x;
  x.mode = ExcitationMode::pulsed;
  x.reservoir_n0 = 0.03;
  x.reservoir_td_ns = 1e9;
  x.pulse_period_ns = 1e4;
  const std::vector<double> late{200.0};
  const double rate = 0.03 / 0.3;
  const auto ss = dynamics::solve_reservoir_occupation(e, x, late);
  rep.near("steady_state", ss.p1[0], 1.75 * rate / (1.0 + 1.75 * rate), 1e-6);

  // Integrated balance p1(t) = int (-p1/T1 + R (1 - p1)) on a dense grid.
  x.reservoir_n0 = 2.0;
  x.reservoir_td_ns = 1.0;
  x.pulse_period_ns = 12.5;
  constexpr double h = 0.001;
  std::vector<double> grid;
  for (int i = 0; i <= 12000; ++i) grid.push_back(i * h);
  const auto tr = dynamics::solve_reservoir_occupation(e, x, grid);
  auto rhs = [&](std::size_t i) {
    const double p1 = tr.p1[i];
    return -p1 / e.t1_ns + dynamics::reservoir_rate(e, x, grid[i]) * (1.0 - p1);
  };
  double worst = 0.0, integral = 0.0;
  bool bounded = true;
  for (std::size_t i = 2; i < grid.size(); i += 2) {
    integral += h / 3.0 * (rhs(i - 2) + 4.0 * rhs(i - 1) + rhs(i));
    worst = std::max(worst, std::abs(tr.p1[i] - tr.p1[0] - integral));
  }
  for (double v : tr.p1) bounded = bounded && v >= 0.0 && v <= 1.0;
  rep.below("conservation_residual", worst, 1e-6);
  rep.truth("populations_in_unit_interval", bounded, bounded ? "0<=p1<=1" : "out of range");
}

// ------------------------------------------------------------------ 6

double g1_squared_integral(const CoherenceModel& c) {
  // 2 * int_0^inf |g1|^2 by Simpson on [0, 40 max(T2, TG)].
  const double upper = 40.0 * std::max(c.t2_ns, c.t_g_ns);
  constexpr int n = 400000;
  const double h = upper / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double g = coherence::g1_fringe(c, i * h);
    s += ((i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0)) * g * g;
  }
  return 2.0 * s * h / 3.0;
}

void coherence_limits(Report& rep) {
  rep.relative("lorentzian_limit", coherence::coherence_time({0.8, 1e6, 0.0}), 0.8, 1e-3);
  rep.relative("gaussian_limit", coherence::coherence_time({1e6, 1.2, 0.0}),
               1.2 * std::sqrt(2.0 / std::numbers::pi), 1e-3);
  // Envelope decays to 1/e at tau_c.
  const CoherenceModel c{0.8, 1.2, 0.0};
  rep.near("envelope_at_tau_c", coherence::g1_fringe(c, coherence::coherence_time(c)), std::exp(-1.0),
           1e-9);
}

void coherence_integral(Report& rep) {
  for (const CoherenceModel c : {CoherenceModel{0.8, 1.2, 0.0}, CoherenceModel{1.5, 2.5, 0.0}}) {
    std::ostringstream name;
    name << "tau_c_vs_g1_squared_integral_t2_" << c.t2_ns << "_tg_" << c.t_g_ns;
    rep.relative(name.str(), coherence::coherence_time(c), g1_squared_integral(c), 0.01);
  }
}

void voigt_limits(Report& rep) {
  rep.truth("pure_gaussian_exact", coherence::voigt_fwhm(0.0, 1.7) == 1.7,
            "value=" + std::to_string(coherence::voigt_fwhm(0.0, 1.7)) + " target=1.7");
  rep.near("pure_lorentzian_ratio", coherence::voigt_fwhm(2.3, 0.0) / 2.3, 1.0008, 1e-4);
}

// ------------------------------------------------------------------ 7

struct Noiseless {
  std::string name;
  FitResult result;
};

fitting::FringeFitOptions fringe_options(bool split) {
  fitting::FringeFitOptions o;
  o.fit_splitting = split;
  return o;
}

std::vector<fitting::FringePoint> fringe_data(const CoherenceModel& c, double sigma, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<fitting::FringePoint> pts;
  for (int i = 0; i <= 150; ++i) {
    const double d = 0.01 * i;
    pts.push_back({d, coherence::g1_fringe(c, d) + (sigma > 0.0 ? noise(rng) : 0.0),
                   sigma > 0.0 ? sigma : 0.01});
  }
  return pts;
}

Histogram decay(double t1, double tau_e, double total, double background) {
  EmitterModel e;
  e.t1_ns = t1;
  e.tau_e_ns = tau_e;
  auto h = make_curve(0.025, 0.05, 400, CurveKind::g2);
  h = hom::sample_model([&](double t) { return dynamics::pulsed_emission_profile(e, t); }, h,
                        DetectorModel{});
  double sum = 0.0;
  for (double v : h.values) sum += v;
  for (auto& v : h.values) v = total * v / sum + background;
  return h;
}

CorrelationCurve spectrum(const coherence::LineShape& s, double amplitude) {
  auto grid = make_symmetric_curve(10.0, 0.02, CurveKind::spectrum);
  auto out = coherence::etalon_convolve(coherence::spectrum_model(s, grid.delays), coherence::Etalon{});
  for (auto& v : out.values) v *= amplitude;
  return out;
}

fitting::HomFitData hom_model_data(const mc::SimConfig& c, double span, double bin) {
  const hom::HomModel model(c.emitter, c.mzi, c.excitation);
  const auto grid = make_symmetric_curve(span, bin, CurveKind::g2);
  auto [perp, par] = hom::sample_hom(model, grid, c.detector);
  fitting::HomFitData d;
  d.g2 = testing::scaled(hom::sample_model([&](double t) { return model.g2(t); }, grid, c.detector), 1e3);
  d.g_perp = testing::scaled(perp, 1e3);
  d.g_parallel = testing::scaled(par, 1e3);
  d.excitation = c.excitation;
  d.emitter = c.emitter;
  d.mzi = c.mzi;
  d.detector = c.detector;
  return d;
}

/// HOM histograms from the Monte-Carlo (co and cross runs plus an HBT run).
fitting::HomFitData hom_mc_data(mc::SimConfig c, double span, double bin) {
  fitting::HomFitData d;
  auto hist = [&](mc::Polarization pol, mc::Layout layout) {
    c.polarization = pol;
    c.layout = layout;
    ++c.seed;
    const auto r = mc::run_simulation(c);
    return mc::histogram_coincidences(r.streams.start, r.streams.stop, bin, span);
  };
  d.g_perp = hist(mc::Polarization::cross, mc::Layout::hom);
  d.g_parallel = hist(mc::Polarization::co, mc::Layout::hom);
  d.g2 = hist(mc::Polarization::co, mc::Layout::hbt);
  d.excitation = c.excitation;
  d.emitter = c.emitter;
  d.mzi = c.mzi;
  d.detector = c.detector;
  return d;
}

void start_away(fitting::HomFitData& d) {
  d.emitter.r_cw_per_ns = 0.4;
  d.emitter.tau_e_ns = 1.0;
  d.emitter.tau_c_prime_ns = 2.0;
  d.mzi.set_bs1(0.5);
  d.mzi.set_bs2(0.5);
}

void check_params(Report& rep, const std::string& prefix, const FitResult& r,
                  const std::map<std::string, double>& truth, double rel) {
  for (const auto& [name, value] : truth) rep.relative(prefix + "_" + name, r.params.at(name), value, rel);
}

void round_trip(Report& rep) {
  const auto t0 = Clock::now();
  mc::SimConfig cw;
  cw.emitter.t1_ns = 1.75;
  cw.emitter.r_cw_per_ns = 0.1;
  cw.emitter.tau_c_prime_ns = 0.55;
  cw.mzi.delay_p_ns = 22.9;
  cw.mzi.set_bs1(0.25);
  cw.mzi.set_bs2(0.48);
  cw.duration_ns = 1.2e8;
  cw.seed = 101;
  mc::SimConfig pulsed;
  pulsed.emitter.t1_ns = 1.75;
  pulsed.emitter.tau_e_ns = 0.3;
  pulsed.emitter.tau_c_prime_ns = 0.95;
  pulsed.excitation.mode = ExcitationMode::pulsed;
  pulsed.mzi.delay_p_ns = 12.5;
  pulsed.mzi.set_bs1(0.27);
  pulsed.mzi.set_bs2(0.35);
  pulsed.pulses = 10'000'000;
  pulsed.seed = 202;

  const std::map<std::string, double> cw_truth{
      {"r", 0.1}, {"tau_c_prime", 0.55}, {"t_bs1", 0.25}, {"t_bs2", 0.48}};
  const std::map<std::string, double> pulsed_truth{
      {"tau_e", 0.3}, {"tau_c_prime", 0.95}, {"t_bs1", 0.27}, {"t_bs2", 0.35}};

  // Noiseless model data.
  {
    auto d = hom_model_data(cw, 30.0, 0.2);
    start_away(d);
    const auto r = fitting::joint_hom_fit(d);
    rep.below("noiseless_cw_hom_residual", r.residual_norm, 1e-12);
    check_params(rep, "noiseless_cw_hom", r, cw_truth, 1e-6);
  }
  {
    auto d = hom_model_data(pulsed, 40.0, 0.25);
    start_away(d);
    const auto r = fitting::joint_hom_fit(d);
    rep.below("noiseless_pulsed_hom_residual", r.residual_norm, 1e-12);
    check_params(rep, "noiseless_pulsed_hom", r, pulsed_truth, 1e-6);
  }
  {
    const auto r = fitting::fit_lifetime(decay(1.75, 0.3, 1e6, 2.0));
    rep.below("noiseless_lifetime_residual", r.residual_norm, 1e-12);
    check_params(rep, "noiseless_lifetime", r, {{"t1", 1.75}, {"tau_e", 0.3}}, 1e-6);
  }
  {
    const CoherenceModel c{1.5, 2.5, std::numbers::pi * 3.1};
    const auto r = fitting::fit_fringe(fringe_data(c, 0.0, 0), fringe_options(true));
    rep.below("noiseless_fringe_residual", r.residual_norm, 1e-12);
    check_params(rep, "noiseless_fringe", r, {{"t2", 1.5}, {"t_g", 2.5}, {"omega_s", c.omega_s_rad_per_ns}},
                 1e-6);
  }
  {
    fitting::SpectrumFitOptions o;
    o.doublet = true;
    const auto r = fitting::fit_spectrum(spectrum({0.5, 0.8, 0.2, 3.1}, 1e4), coherence::Etalon{}, o);
    rep.below("noiseless_spectrum_residual", r.residual_norm, 1e-12);
    check_params(rep, "noiseless_spectrum", r,
                 {{"delta_l", 0.5}, {"delta_g", 0.8}, {"center", 0.2}, {"splitting", 3.1}}, 1e-6);
  }

  // Monte-Carlo and Poisson-noised data (sample sizes as in the names).
  {
    auto d = hom_mc_data(cw, 30.0, 0.2);
    start_away(d);
    check_params(rep, "mc_1e7_cw_hom", fitting::joint_hom_fit(d), cw_truth, 0.05);
  }
  {
    auto d = hom_mc_data(pulsed, 40.0, 0.25);
    start_away(d);
    check_params(rep, "mc_1e7_pulsed_hom", fitting::joint_hom_fit(d), pulsed_truth, 0.05);
  }
  {
    const auto h = testing::poisson_noise(decay(1.75, 0.3, 1e6, 2.0), 7);
    check_params(rep, "poisson_1e6_lifetime", fitting::fit_lifetime(h), {{"t1", 1.75}, {"tau_e", 0.3}}, 0.05);
  }
  {
    const CoherenceModel c{1.5, 2.5, std::numbers::pi * 3.1};
    const auto r = fitting::fit_fringe(fringe_data(c, 0.01, 3), fringe_options(true));
    rep.relative("sigma_0.01_fringe_delta_v_ghz", r.derived.at("delta_v_ghz"),
                 coherence::voigt_fwhm(coherence::lorentzian_fwhm(1.5), coherence::gaussian_fwhm(2.5)), 0.05);
    rep.relative("sigma_0.01_fringe_splitting_ghz", r.derived.at("splitting_ghz"), 3.1, 0.05);
  }
  {
    fitting::SpectrumFitOptions o;
    o.doublet = true;
    const auto y = testing::poisson_noise(spectrum({0.5, 0.8, 0.2, 3.1}, 1e4), 9);
    const auto r = fitting::fit_spectrum(y, coherence::Etalon{}, o);
    rep.relative("poisson_1e4_spectrum_delta_v_ghz", r.derived.at("delta_v_ghz"),
                 coherence::voigt_fwhm(0.5, 0.8), 0.05);
    rep.relative("poisson_1e4_spectrum_splitting", r.params.at("splitting"), 3.1, 0.05);
  }

  // Error scaling: replica RMS of the fitted tau_c' from Poisson-noised CW
  // histograms holding the coincidences of N emitted photons.
  {
    const hom::HomModel model(cw.emitter, cw.mzi, cw.excitation);
    const auto grid = make_symmetric_curve(30.0, 0.2, CurveKind::g2);
    const auto [perp, par] = hom::sample_hom(model, grid, cw.detector);
    const auto g2 = hom::sample_model([&](double t) { return model.g2(t); }, grid, cw.detector);
    const double mean_interval = cw.emitter.t1_ns + 1.0 / cw.emitter.r_cw_per_ns;
    constexpr int replicas = 32;
    std::vector<double> log_n, log_rms;
    std::uint64_t seed = 1000;
    for (double n : {1e5, 1e6, 1e7}) {
      // Ordered pairs per bin and unit model value: N^2/D * route * bin.
      const double pairs = n / mean_interval * 0.2;
      double ss = 0.0;
      for (int k = 0; k < replicas; ++k) {
        fitting::HomFitData d;
        d.emitter = cw.emitter;
        d.mzi = cw.mzi;
        d.detector = cw.detector;
        d.g_perp = testing::poisson_noise(testing::scaled(perp, 0.25 * pairs), seed++);
        d.g_parallel = testing::poisson_noise(testing::scaled(par, 0.25 * pairs), seed++);
        d.g2 = testing::poisson_noise(testing::scaled(g2, cw.mzi.t_bs1 * cw.mzi.r_bs1 * pairs), seed++);
        start_away(d);
        const double err = fitting::joint_hom_fit(d).params.at("tau_c_prime") / 0.55 - 1.0;
        ss += err * err;
      }
      log_n.push_back(std::log(n));
      log_rms.push_back(0.5 * std::log(ss / replicas));
      std::cout << "INFO 7 tau_c_prime_relative_rms N=" << n << " " << std::sqrt(ss / replicas) << "\n";
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < log_n.size(); ++i) mx += log_n[i] / 3.0, my += log_rms[i] / 3.0;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < log_n.size(); ++i) {
      sxy += (log_n[i] - mx) * (log_rms[i] - my);
      sxx += (log_n[i] - mx) * (log_n[i] - mx);
    }
    rep.near("hom_error_scaling_slope", sxy / sxx, -0.5, 0.1);
  }
  std::cout << "INFO 7 runtime_s " << seconds_since(t0) << "\n";
}

// ------------------------------------------------------------------ 8

void budget(Report& rep) {
  const auto b = cli::efficiency_budget(cli::measured_budget_input());
  rep.near("first_lens_mcps", b.first_lens_cps * 1e-6, 12.9, 0.1);
  rep.near("eta_s_pct", 100.0 * b.eta_s, 16.1, 0.2);
  rep.near("eta_c_pct", 100.0 * b.eta_c, 84.8, 1.0);
}

// ------------------------------------------------------------------ 9

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void determinism(Report& rep) {
  const auto dir = std::filesystem::temp_directory_path() / "hombench_acceptance_9";
  std::filesystem::create_directories(dir);
  const auto cfg = dir / "run.cfg";
  std::ofstream(cfg) << "emitter.t1_ns = 1.75\nemitter.r_cw_per_ns = 0.1\nemitter.tau_c_prime_ns = 0.55\n"
                        "mzi.delay_p_ns = 22.9\nmzi.t_bs1 = 0.25\nmzi.r_bs1 = 0.75\n"
                        "mzi.t_bs2 = 0.48\nmzi.r_bs2 = 0.52\nsim.duration_ns = 2e7\n";
  std::ostringstream sink;
  auto simulate = [&](const std::string& name, const std::string& threads) {
    const auto out = dir / name;
    cli::run({"simulate", "--config", cfg.string(), "--seed", "42", "--threads", threads, "--out",
              out.string()},
             sink, sink);
    return slurp(out);
  };
  const auto a = simulate("a.phts", "1"), b = simulate("b.phts", "1"), c = simulate("c.phts", "3");
  rep.truth("simulation_bytes_repeat", !a.empty() && a == b, "bytes=" + std::to_string(a.size()));
  rep.truth("simulation_bytes_threads", !a.empty() && a == c, "bytes=" + std::to_string(c.size()));
  const auto ca = simulate("a.csv", "1"), cb = simulate("b.csv", "2");
  rep.truth("simulation_csv_repeat", !ca.empty() && ca == cb, "bytes=" + std::to_string(ca.size()));

  auto fit = [&](const std::string& prefix) {
    const auto out = (dir / prefix).string();
    cli::run({"fit", "hom", "--config", cfg.string(), "--perp", (dir / "a.phts").string(), "--par",
              (dir / "a.phts").string(), "--bin-ns", "0.5", "--span-ns", "30", "--free",
              "tau_c_prime", "--out", out},
             sink, sink);
    return slurp(out + ".txt") + slurp(out + ".csv");
  };
  const auto fa = fit("fit_a"), fb = fit("fit_b");
  rep.truth("fit_report_repeat", !fa.empty() && fa == fb, "bytes=" + std::to_string(fa.size()));
  std::filesystem::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<void(Report&)>> criteria{
      {"1", fig3_reconstruction}, {"2", fig6_numbers},      {"3", oracle_equivalence},
      {"4", pulsed_dual_construction}, {"5", reservoir},    {"6a", coherence_limits},
      {"6b", coherence_integral}, {"6c", voigt_limits},     {"7", round_trip},
      {"8", budget},              {"9", determinism}};
  std::vector<std::string> selected(argv + 1, argv + argc);
  if (selected.empty()) {
    for (const auto& [name, fn] : criteria) selected.push_back(name);
  }
  int failures = 0;
  for (const auto& name : selected) {
    const auto it = criteria.find(name);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 2;
    }
    Report rep(name);
    try {
      it->second(rep);
    } catch (const std::exception& e) {
      rep.truth("exception", false, e.what());
    }
    failures += rep.failures();
  }
  return failures == 0 ? 0 : 1;
}
