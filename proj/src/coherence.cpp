#include "hombench/coherence.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <boost/math/tools/minima.hpp>

namespace hombench::coherence {
namespace {

using std::numbers::pi;

// Weideman's rational expansion of w(z) in the upper half plane.
constexpr int kWeidemanN = 32;

struct WeidemanCoefficients {
  double l = 0.0;
  std::array<double, kWeidemanN> a{};  // highest power first
};

WeidemanCoefficients make_weideman() {
  constexpr int n = kWeidemanN;
  constexpr int m = 2 * n;
  constexpr int m2 = 2 * m;
  WeidemanCoefficients c;
  c.l = std::sqrt(n / std::numbers::sqrt2);
  std::vector<double> f(m2, 0.0);
  for (int k = -m + 1; k <= m - 1; ++k) {
    const double t = c.l * std::tan(0.5 * k * pi / m);
    f[static_cast<std::size_t>(k + m)] = std::exp(-t * t) * (c.l * c.l + t * t);
  }
  std::vector<double> shifted(m2);
  for (int i = 0; i < m2; ++i) shifted[i] = f[(i + m) % m2];
  for (int j = 1; j <= n; ++j) {
    double re = 0.0;
    for (int i = 0; i < m2; ++i) re += shifted[i] * std::cos(2.0 * pi * j * i / m2);
    c.a[static_cast<std::size_t>(n - j)] = re / m2;
  }
  return c;
}

const WeidemanCoefficients& weideman() {
  static const WeidemanCoefficients c = make_weideman();
  return c;
}

double grid_step(std::span<const double> grid) {
  if (grid.size() < 2) return 1.0;
  const double step = grid[1] - grid[0];
  if (!(step > 0.0)) throw std::invalid_argument("spectrum grid must be increasing");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(grid[i] - grid[i - 1] - step) > 1e-9 * std::max(1.0, std::abs(step))) {
      throw std::invalid_argument("spectrum grid must be uniform");
    }
  }
  return step;
}

double line_value(const LineShape& s, double x) {
  if (s.splitting_ghz == 0.0) return voigt_profile(x - s.center_ghz, s.delta_l_ghz, s.delta_g_ghz);
  const double w_hi = s.weight_ratio / (1.0 + s.weight_ratio);
  const double w_lo = 1.0 - w_hi;
  const double h = 0.5 * s.splitting_ghz;
  return w_lo * voigt_profile(x - s.center_ghz + h, s.delta_l_ghz, s.delta_g_ghz) +
         w_hi * voigt_profile(x - s.center_ghz - h, s.delta_l_ghz, s.delta_g_ghz);
}

double line_peak(const LineShape& s) {
  if (s.splitting_ghz == 0.0) return line_value(s, s.center_ghz);
  const double width = voigt_fwhm(s.delta_l_ghz, s.delta_g_ghz);
  const double lo = s.center_ghz - 0.5 * std::abs(s.splitting_ghz) - width;
  const double hi = s.center_ghz + 0.5 * std::abs(s.splitting_ghz) + width;
  constexpr int kScan = 400;
  const double step = (hi - lo) / kScan;
  double best_x = lo, best = -1.0;
  for (int i = 0; i <= kScan; ++i) {
    const double x = lo + i * step;
    const double v = line_value(s, x);
    if (v > best) best = v, best_x = x;
  }
  const auto r = boost::math::tools::brent_find_minima(
      [&](double x) { return -line_value(s, x); }, best_x - step, best_x + step, 52);
  return std::max(best, -r.second);
}

}  // namespace

double g1_fringe(const CoherenceModel& coh, double delay_ns) {
  require_valid(validate(coh), "coherence model");
  const double d = delay_ns;
  double v = std::exp(-0.5 * pi * (d / coh.t_g_ns) * (d / coh.t_g_ns) - std::abs(d) / coh.t2_ns);
  if (coh.omega_s_rad_per_ns > 0.0) v *= std::abs(std::cos(coh.omega_s_rad_per_ns * d));
  return v;
}

double lorentzian_fwhm(double t2_ns) {
  if (!(t2_ns > 0.0)) throw std::invalid_argument("t2 must be > 0");
  return 1.0 / (pi * t2_ns);
}

double gaussian_fwhm(double t_g_ns) {
  if (!(t_g_ns > 0.0)) throw std::invalid_argument("t_g must be > 0");
  return std::sqrt(2.0 * std::numbers::ln2) / (std::sqrt(pi) * t_g_ns);
}

double t2_from_lorentzian_fwhm(double delta_l_ghz) {
  if (!(delta_l_ghz > 0.0)) throw std::invalid_argument("Lorentzian width must be > 0");
  return 1.0 / (pi * delta_l_ghz);
}

double t_g_from_gaussian_fwhm(double delta_g_ghz) {
  if (!(delta_g_ghz > 0.0)) throw std::invalid_argument("Gaussian width must be > 0");
  return std::sqrt(2.0 * std::numbers::ln2) / (std::sqrt(pi) * delta_g_ghz);
}

double voigt_fwhm(double delta_l_ghz, double delta_g_ghz) {
  if (!(delta_l_ghz >= 0.0) || !(delta_g_ghz >= 0.0)) {
    throw std::invalid_argument("widths must be >= 0");
  }
  if (delta_l_ghz == 0.0 && delta_g_ghz == 0.0) {
    throw std::invalid_argument("degenerate lineshape");
  }
  return 0.535 * delta_l_ghz +
         std::sqrt(0.217 * delta_l_ghz * delta_l_ghz + delta_g_ghz * delta_g_ghz);
}

double coherence_time(const CoherenceModel& coh) {
  require_valid(validate(coh), "coherence model");
  const double a = coh.t_g_ns * coh.t_g_ns / (pi * coh.t2_ns);
  const double c = 2.0 * coh.t_g_ns * coh.t_g_ns / pi;
  // -a + sqrt(a^2 + c), rearranged to avoid cancellation when a >> c.
  return c / (a + std::sqrt(a * a + c));
}

double transform_limit_linewidth(double t1_ns) {
  if (!(t1_ns > 0.0)) throw std::invalid_argument("t1 must be > 0");
  return 1.0 / (2.0 * pi * t1_ns);
}

std::complex<double> faddeeva(std::complex<double> z) {
  if (z.imag() < 0.0) {
    return 2.0 * std::exp(-z * z) - faddeeva(-z);
  }
  const auto& c = weideman();
  const std::complex<double> i(0.0, 1.0);
  const std::complex<double> denom = c.l - i * z;
  const std::complex<double> zz = (c.l + i * z) / denom;
  std::complex<double> p = 0.0;
  for (double coeff : c.a) p = p * zz + coeff;
  return 2.0 * p / (denom * denom) + (1.0 / std::sqrt(pi)) / denom;
}

double voigt_profile(double x, double delta_l, double delta_g) {
  if (!(delta_l >= 0.0) || !(delta_g >= 0.0)) throw std::invalid_argument("widths must be >= 0");
  const double gamma = 0.5 * delta_l;
  if (delta_g == 0.0) {
    if (gamma == 0.0) throw std::invalid_argument("degenerate lineshape");
    return gamma / (pi * (x * x + gamma * gamma));
  }
  const double sigma = delta_g / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  if (gamma == 0.0) {
    return std::exp(-0.5 * (x / sigma) * (x / sigma)) / (sigma * std::sqrt(2.0 * pi));
  }
  const std::complex<double> z(x / (sigma * std::numbers::sqrt2), gamma / (sigma * std::numbers::sqrt2));
  return faddeeva(z).real() / (sigma * std::sqrt(2.0 * pi));
}

LineShape line_shape(const CoherenceModel& coh) {
  require_valid(validate(coh), "coherence model");
  LineShape s;
  s.delta_l_ghz = lorentzian_fwhm(coh.t2_ns);
  s.delta_g_ghz = gaussian_fwhm(coh.t_g_ns);
  s.splitting_ghz = coh.omega_s_rad_per_ns / pi;
  return s;
}

CorrelationCurve spectrum_model(const LineShape& shape, std::span<const double> grid_ghz) {
  CorrelationCurve out;
  out.kind = CurveKind::spectrum;
  out.bin_width = grid_step(grid_ghz);
  out.delays.assign(grid_ghz.begin(), grid_ghz.end());
  out.values.resize(grid_ghz.size());
  const double peak = line_peak(shape);
  for (std::size_t i = 0; i < grid_ghz.size(); ++i) {
    out.values[i] = line_value(shape, grid_ghz[i]) / peak;
  }
  return out;
}

CorrelationCurve spectrum_model(const CoherenceModel& coh, std::span<const double> grid_ghz) {
  return spectrum_model(line_shape(coh), grid_ghz);
}

double etalon_transmission(double detuning_ghz, const Etalon& etalon) {
  if (!(etalon.bandwidth_ghz > 0.0) || !(etalon.bandwidth_ghz < etalon.fsr_ghz)) {
    throw std::invalid_argument("etalon requires 0 < bandwidth < fsr");
  }
  const double half = std::sin(0.5 * pi * etalon.bandwidth_ghz / etalon.fsr_ghz);
  const double k = 1.0 / (half * half);
  const double s = std::sin(pi * detuning_ghz / etalon.fsr_ghz);
  return 1.0 / (1.0 + k * s * s);
}

CorrelationCurve etalon_convolve(const CorrelationCurve& spectrum, const Etalon& etalon) {
  if (!(etalon.bandwidth_ghz > 0.0) || !(etalon.bandwidth_ghz < etalon.fsr_ghz)) {
    throw std::invalid_argument("etalon requires 0 < bandwidth < fsr");
  }
  if (spectrum.size() == 0) return spectrum;
  if (spectrum.delays.back() - spectrum.delays.front() >= etalon.fsr_ghz) {
    throw std::invalid_argument("order overlap");
  }
  const std::size_t n = spectrum.size();
  std::vector<double> kernel(2 * n - 1);
  for (std::size_t k = 0; k < kernel.size(); ++k) {
    const double offset = (static_cast<double>(k) - static_cast<double>(n - 1)) * spectrum.bin_width;
    kernel[k] = etalon_transmission(offset, etalon);
  }
  CorrelationCurve out = spectrum;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double v = spectrum.values[j];
    if (v == 0.0) continue;
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += kernel[i + n - 1 - j];
    for (std::size_t i = 0; i < n; ++i) out.values[i] += v * kernel[i + n - 1 - j] / norm;
  }
  return out;
}

}  // namespace hombench::coherence
