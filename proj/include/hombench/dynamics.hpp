#pragma once

// Two-level occupation dynamics and second-order correlations g2(tau) under
// CW and pulsed incoherent excitation.

#include <span>
#include <vector>

#include "hombench/core.hpp"

namespace hombench::dynamics {

/// CW g2(tau) = 1 - exp(-(1/T1 + R)|tau|).
double cw_g2(const EmitterModel& emitter, double tau_ns);

/// Unnormalised single-pulse emission probability
/// H(t) [1 - exp(-t/tau_e)] exp(-t/T1). For tau_e = 0 the rise is
/// instantaneous and the profile is H(t) exp(-t/T1).
double pulsed_emission_profile(const EmitterModel& emitter, double t_ns);

/// Integral of pulsed_emission_profile over t >= 0.
double pulsed_emission_integral(const EmitterModel& emitter);

/// Time of the profile maximum, tau_e ln(1 + T1/tau_e) (0 when tau_e = 0).
double pulsed_emission_peak_time(const EmitterModel& emitter);

/// Autocorrelation of the emission profile, C(tau) = int p(t) p(t+tau) dt,
/// i.e. the shape of one side peak of the pulsed g2.
double pulse_autocorrelation(const EmitterModel& emitter, double tau_ns);

inline constexpr int kDefaultPeaks = 40;

/// Ensemble-averaged pulsed g2 built from the closed-form sum over side
/// peaks n = -n_peaks..n_peaks, n != 0. The zero-delay peak is absent
/// (one photon per pulse).
class PulsedCorrelation {
 public:
  PulsedCorrelation(const EmitterModel& emitter, const ExcitationConfig& excitation,
                    int n_peaks = kDefaultPeaks);

  /// Normalised so that the value at tau = +-T is 1.
  double operator()(double tau_ns) const { return raw(tau_ns) / raw_at_period_; }

  /// Analytic prefactors retained: (1/T) sum_{n != 0} C(tau - nT).
  double raw(double tau_ns) const;

  /// Contribution of the single peak centred at tau = 0 (n = 0 term,
  /// which the physical g2 excludes), on the normalised scale.
  double central_peak(double tau_ns) const;

  /// Ordered-pair density per pulse for unit-occupancy pulses, relative
  /// to the normalised g2: pairs/(pulse*ns) = pair_density_scale() * g2.
  double pair_density_scale() const;

  double period() const { return period_; }

 private:
  double shape(double tau) const;

  double period_;
  int n_peaks_;
  double a_;         // 1/T1
  double b_;         // 1/T1 + 1/tau_e (infinite when tau_e = 0)
  double coef_a_;    // prefactor of exp(-a|tau|)
  double coef_b_;    // prefactor of exp(-b|tau|)
  double integral_;  // int p
  double raw_at_period_;
};

/// Normalised pulsed g2 (value 1 at tau = +-T). Throws when T <= 0.
double pulsed_g2(const EmitterModel& emitter, const ExcitationConfig& excitation,
                 double tau_ns, int n_peaks = kDefaultPeaks);

struct OccupationTrajectory {
  std::vector<double> times;
  std::vector<double> p1;
};

/// Integrates dp1/dt = -p1/T1 + R(t)(1 - p1), R(t) = (N0/tau_e) exp(-t/TD),
/// p1(0) = 0, and samples p1 on `grid` (ns, increasing, within one pulse
/// period when pulsed). Adaptive Dormand-Prince, relative tolerance 1e-8.
OccupationTrajectory solve_reservoir_occupation(const EmitterModel& emitter,
                                                const ExcitationConfig& excitation,
                                                std::span<const double> grid);

/// Reservoir refill rate R(t) for the excitation's N0 and TD.
double reservoir_rate(const EmitterModel& emitter, const ExcitationConfig& excitation,
                      double t_ns);

/// 1/tau_c = 1/(2 T1) + 1/tau_d.
double coherence_time_from_dephasing(double t1_ns, double tau_d_ns);

}  // namespace hombench::dynamics
