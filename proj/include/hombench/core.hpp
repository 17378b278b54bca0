#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hombench {

/// Two-level emitter. All times in nanoseconds.
struct EmitterModel {
  double t1_ns = 1.75;          ///< radiative lifetime
  double tau_e_ns = 0.0;        ///< state-preparation (excitation jitter) time
  double r_cw_per_ns = 0.0;     ///< CW re-excitation rate
  double tau_c_prime_ns = 1.0;  ///< HOM coalescence time
  double f_overlap = 1.0;       ///< spatial overlap on BS2
  std::optional<double> tau_d_ns;  ///< pure-dephasing time
};

/// Unbalanced Mach-Zehnder interferometer. Beamsplitter coefficients are
/// intensity coefficients (t + r = 1).
struct InterferometerModel {
  double delay_p_ns = 0.0;
  double t_bs1 = 0.5;
  double r_bs1 = 0.5;
  double t_bs2 = 0.5;
  double r_bs2 = 0.5;
  double hwp_deg = 0.0;

  /// Sets t_bs1 and r_bs1 = 1 - t.
  void set_bs1(double t) { t_bs1 = t; r_bs1 = 1.0 - t; }
  void set_bs2(double t) { t_bs2 = t; r_bs2 = 1.0 - t; }
};

struct DetectorModel {
  double jitter_fwhm_ps = 0.0;  ///< pairwise instrument response FWHM
  double efficiency = 1.0;

  double jitter_fwhm_ns() const { return jitter_fwhm_ps * 1e-3; }
};

enum class ExcitationMode { cw, pulsed };

struct ExcitationConfig {
  ExcitationMode mode = ExcitationMode::cw;
  double pulse_period_ns = 12.5;
  double power_ratio = 1.0;  ///< P/Psat, metadata only
  std::optional<double> reservoir_n0;
  std::optional<double> reservoir_td_ns;
};

enum class CurveKind { g2, g2_perp, g2_parallel, g1, spectrum };

/// Uniformly binned curve: model values or coincidence counts.
struct CorrelationCurve {
  std::vector<double> delays;  ///< bin centres
  std::vector<double> values;
  double bin_width = 0.0;
  CurveKind kind = CurveKind::g2;

  std::size_t size() const { return delays.size(); }
};

using Histogram = CorrelationCurve;

/// First-order coherence: Lorentzian T2, Gaussian TG and optional doublet
/// splitting (angular, rad/ns).
struct CoherenceModel {
  double t2_ns = 1.0;
  double t_g_ns = 1.0;
  double omega_s_rad_per_ns = 0.0;
};

struct FitResult {
  std::map<std::string, double> params;
  std::map<std::string, double> uncertainties;  ///< +inf when unbounded
  std::map<std::string, double> derived;        ///< quantities computed from params
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

using ValidationReport = std::vector<std::string>;

ValidationReport validate(const EmitterModel& m);
ValidationReport validate(const InterferometerModel& m);
ValidationReport validate(const DetectorModel& m);
ValidationReport validate(const ExcitationConfig& m);
ValidationReport validate(const CorrelationCurve& m);
ValidationReport validate(const CoherenceModel& m);
ValidationReport validate(const FitResult& m);

/// Throws std::invalid_argument listing every violation when the report is
/// not empty. `what` names the object in the message.
void require_valid(const ValidationReport& report, std::string_view what);

/// Curve with `count` bins centred at start + i*step.
CorrelationCurve make_curve(double start, double step, std::size_t count,
                            CurveKind kind);

/// Symmetric grid with bins centred at k*step for |k| <= round(span/step).
CorrelationCurve make_symmetric_curve(double span, double step, CurveKind kind);

std::string_view to_string(CurveKind kind);
std::string_view to_string(ExcitationMode mode);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Strict decimal parse (whole string must be consumed).
std::optional<double> parse_double(std::string_view text);

}  // namespace hombench
