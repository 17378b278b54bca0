#include "hombench/core.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace hombench {
namespace {

constexpr double kCoefficientTolerance = 1e-9;

void check(ValidationReport& report, bool ok, std::string message) {
  if (!ok) report.push_back(std::move(message));
}

bool is_fraction(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

}  // namespace

ValidationReport validate(const EmitterModel& m) {
  ValidationReport r;
  check(r, std::isfinite(m.t1_ns) && m.t1_ns > 0.0, "t1 > 0");
  check(r, std::isfinite(m.tau_e_ns) && m.tau_e_ns >= 0.0, "tau_e >= 0");
  check(r, std::isfinite(m.r_cw_per_ns) && m.r_cw_per_ns >= 0.0, "r_cw >= 0");
  check(r, std::isfinite(m.tau_c_prime_ns) && m.tau_c_prime_ns > 0.0,
        "tau_c_prime > 0");
  check(r, is_fraction(m.f_overlap), "0 <= f_overlap <= 1");
  if (m.tau_d_ns) {
    check(r, std::isfinite(*m.tau_d_ns) && *m.tau_d_ns > 0.0, "tau_d > 0");
  }
  return r;
}

ValidationReport validate(const InterferometerModel& m) {
  ValidationReport r;
  check(r, is_fraction(m.t_bs1) && is_fraction(m.r_bs1) &&
               is_fraction(m.t_bs2) && is_fraction(m.r_bs2),
        "beamsplitter coefficients in [0,1]");
  check(r, std::abs(m.t_bs1 + m.r_bs1 - 1.0) <= kCoefficientTolerance,
        "t_bs1 + r_bs1 = 1");
  check(r, std::abs(m.t_bs2 + m.r_bs2 - 1.0) <= kCoefficientTolerance,
        "t_bs2 + r_bs2 = 1");
  check(r, std::isfinite(m.delay_p_ns) && m.delay_p_ns >= 0.0, "delay_p >= 0");
  check(r, std::isfinite(m.hwp_deg), "hwp_angle finite");
  return r;
}

ValidationReport validate(const DetectorModel& m) {
  ValidationReport r;
  check(r, std::isfinite(m.jitter_fwhm_ps) && m.jitter_fwhm_ps >= 0.0,
        "jitter_fwhm >= 0");
  check(r, is_fraction(m.efficiency), "0 <= efficiency <= 1");
  return r;
}

ValidationReport validate(const ExcitationConfig& m) {
  ValidationReport r;
  if (m.mode == ExcitationMode::pulsed) {
    check(r, std::isfinite(m.pulse_period_ns) && m.pulse_period_ns > 0.0,
          "pulse_period > 0");
  }
  check(r, std::isfinite(m.power_ratio) && m.power_ratio >= 0.0,
        "power_ratio >= 0");
  if (m.reservoir_n0) {
    check(r, std::isfinite(*m.reservoir_n0) && *m.reservoir_n0 > 0.0,
          "reservoir_n0 > 0");
  }
  if (m.reservoir_td_ns) {
    check(r, std::isfinite(*m.reservoir_td_ns) && *m.reservoir_td_ns > 0.0,
          "reservoir_td > 0");
  }
  return r;
}

ValidationReport validate(const CorrelationCurve& m) {
  ValidationReport r;
  check(r, m.delays.size() == m.values.size(), "delays and values same length");
  check(r, std::isfinite(m.bin_width) && m.bin_width > 0.0, "bin_width > 0");
  bool increasing = true;
  bool uniform = true;
  for (std::size_t i = 1; i < m.delays.size(); ++i) {
    const double step = m.delays[i] - m.delays[i - 1];
    if (!(step > 0.0)) increasing = false;
    if (std::abs(step - m.bin_width) > 1e-9) uniform = false;
  }
  check(r, increasing, "delays strictly increasing");
  check(r, uniform, "delays uniformly spaced by bin_width");
  bool finite = true;
  bool nonnegative = true;
  bool bounded = true;
  for (double v : m.values) {
    if (!std::isfinite(v)) finite = false;
    if (v < 0.0) nonnegative = false;
    if (m.kind == CurveKind::g1 && v > 1.0) bounded = false;
  }
  check(r, finite, "values finite");
  check(r, nonnegative, "values >= 0");
  check(r, bounded, "g1 values <= 1");
  return r;
}

ValidationReport validate(const CoherenceModel& m) {
  ValidationReport r;
  check(r, std::isfinite(m.t2_ns) && m.t2_ns > 0.0, "t2 > 0");
  check(r, std::isfinite(m.t_g_ns) && m.t_g_ns > 0.0, "t_g > 0");
  check(r, std::isfinite(m.omega_s_rad_per_ns) && m.omega_s_rad_per_ns >= 0.0,
        "omega_s >= 0");
  return r;
}

ValidationReport validate(const FitResult& m) {
  ValidationReport r;
  bool same_keys = m.params.size() == m.uncertainties.size();
  for (const auto& [name, value] : m.params) {
    if (!m.uncertainties.contains(name)) same_keys = false;
  }
  check(r, same_keys, "every parameter has an uncertainty");
  check(r, std::isfinite(m.residual_norm) && m.residual_norm >= 0.0,
        "residual_norm >= 0");
  return r;
}

void require_valid(const ValidationReport& report, std::string_view what) {
  if (report.empty()) return;
  std::ostringstream os;
  os << "invalid " << what << ":";
  for (std::size_t i = 0; i < report.size(); ++i) {
    os << (i == 0 ? " " : "; ") << "violates " << report[i];
  }
  throw std::invalid_argument(os.str());
}

CorrelationCurve make_curve(double start, double step, std::size_t count,
                            CurveKind kind) {
  if (!(step > 0.0)) throw std::invalid_argument("bin width must be > 0");
  CorrelationCurve c;
  c.bin_width = step;
  c.kind = kind;
  c.delays.resize(count);
  c.values.assign(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    c.delays[i] = start + static_cast<double>(i) * step;
  }
  return c;
}

CorrelationCurve make_symmetric_curve(double span, double step,
                                      CurveKind kind) {
  if (!(step > 0.0)) throw std::invalid_argument("bin width must be > 0");
  if (!(span >= 0.0)) throw std::invalid_argument("span must be >= 0");
  const auto half = static_cast<long long>(std::llround(span / step));
  CorrelationCurve c = make_curve(0.0, step, static_cast<std::size_t>(2 * half + 1), kind);
  for (long long k = -half; k <= half; ++k) {
    c.delays[static_cast<std::size_t>(k + half)] = static_cast<double>(k) * step;
  }
  return c;
}

std::string_view to_string(CurveKind kind) {
  switch (kind) {
    case CurveKind::g2: return "g2";
    case CurveKind::g2_perp: return "g2_perp";
    case CurveKind::g2_parallel: return "g2_parallel";
    case CurveKind::g1: return "g1";
    case CurveKind::spectrum: return "spectrum";
  }
  return "?";
}

std::string_view to_string(ExcitationMode mode) {
  return mode == ExcitationMode::cw ? "cw" : "pulsed";
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace hombench
