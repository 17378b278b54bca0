#include "hombench/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/numeric/odeint.hpp>

namespace hombench::dynamics {
namespace {

// Peaks further than this many lifetimes from tau contribute < e^-40.
constexpr double kPeakCutoffLifetimes = 40.0;

void require_lifetime(const EmitterModel& emitter) {
  if (!(emitter.t1_ns > 0.0) || !std::isfinite(emitter.t1_ns)) {
    throw std::invalid_argument("t1 must be > 0");
  }
}

}  // namespace

double cw_g2(const EmitterModel& emitter, double tau_ns) {
  if (!std::isfinite(tau_ns)) throw std::invalid_argument("invalid delay");
  require_lifetime(emitter);
  if (emitter.r_cw_per_ns < 0.0) throw std::invalid_argument("r_cw must be >= 0");
  const double rate = 1.0 / emitter.t1_ns + emitter.r_cw_per_ns;
  return -std::expm1(-rate * std::abs(tau_ns));
}

double pulsed_emission_profile(const EmitterModel& emitter, double t_ns) {
  require_lifetime(emitter);
  if (!(t_ns > 0.0)) return 0.0;
  const double decay = std::exp(-t_ns / emitter.t1_ns);
  if (emitter.tau_e_ns <= 0.0) return decay;
  return -std::expm1(-t_ns / emitter.tau_e_ns) * decay;
}

double pulsed_emission_integral(const EmitterModel& emitter) {
  require_lifetime(emitter);
  const double t1 = emitter.t1_ns;
  const double te = emitter.tau_e_ns;
  // int e^{-t/T1} - e^{-t(1/T1 + 1/te)} = T1 - te T1/(te + T1)
  return t1 - te * t1 / (te + t1);
}

double pulsed_emission_peak_time(const EmitterModel& emitter) {
  require_lifetime(emitter);
  if (emitter.tau_e_ns <= 0.0) return 0.0;
  return emitter.tau_e_ns * std::log1p(emitter.t1_ns / emitter.tau_e_ns);
}

double pulse_autocorrelation(const EmitterModel& emitter, double tau_ns) {
  require_lifetime(emitter);
  const double a = 1.0 / emitter.t1_ns;
  const double t = std::abs(tau_ns);
  if (emitter.tau_e_ns <= 0.0) return std::exp(-a * t) / (2.0 * a);
  const double b = a + 1.0 / emitter.tau_e_ns;
  return std::exp(-a * t) * (0.5 / a - 1.0 / (a + b)) +
         std::exp(-b * t) * (0.5 / b - 1.0 / (a + b));
}

PulsedCorrelation::PulsedCorrelation(const EmitterModel& emitter,
                                     const ExcitationConfig& excitation, int n_peaks)
    : period_(excitation.pulse_period_ns), n_peaks_(n_peaks) {
  if (!(period_ > 0.0) || !std::isfinite(period_)) {
    throw std::invalid_argument("pulse period must be > 0");
  }
  if (n_peaks < 1) throw std::invalid_argument("n_peaks must be >= 1");
  require_lifetime(emitter);
  if (emitter.tau_e_ns < 0.0) throw std::invalid_argument("tau_e must be >= 0");
  a_ = 1.0 / emitter.t1_ns;
  if (emitter.tau_e_ns > 0.0) {
    b_ = a_ + 1.0 / emitter.tau_e_ns;
    coef_a_ = 0.5 / a_ - 1.0 / (a_ + b_);
    coef_b_ = 0.5 / b_ - 1.0 / (a_ + b_);
  } else {
    b_ = std::numeric_limits<double>::infinity();
    coef_a_ = 0.5 / a_;
    coef_b_ = 0.0;
  }
  integral_ = pulsed_emission_integral(emitter);
  raw_at_period_ = raw(period_);
}

double PulsedCorrelation::shape(double tau) const {
  const double t = std::abs(tau);
  double v = coef_a_ * std::exp(-a_ * t);
  if (coef_b_ != 0.0) v += coef_b_ * std::exp(-b_ * t);
  return v;
}

double PulsedCorrelation::raw(double tau_ns) const {
  const double cutoff = kPeakCutoffLifetimes / a_;
  const auto lo = std::max<long long>(-n_peaks_, static_cast<long long>(std::floor((tau_ns - cutoff) / period_)));
  const auto hi = std::min<long long>(n_peaks_, static_cast<long long>(std::ceil((tau_ns + cutoff) / period_)));
  double sum = 0.0;
  for (long long n = lo; n <= hi; ++n) {
    if (n == 0) continue;
    sum += shape(tau_ns - static_cast<double>(n) * period_);
  }
  return sum / period_;
}

double PulsedCorrelation::central_peak(double tau_ns) const {
  return shape(tau_ns) / period_ / raw_at_period_;
}

double PulsedCorrelation::pair_density_scale() const {
  return period_ * raw_at_period_ / (integral_ * integral_);
}

double pulsed_g2(const EmitterModel& emitter, const ExcitationConfig& excitation,
                 double tau_ns, int n_peaks) {
  if (!std::isfinite(tau_ns)) throw std::invalid_argument("invalid delay");
  return PulsedCorrelation(emitter, excitation, n_peaks)(tau_ns);
}

double reservoir_rate(const EmitterModel& emitter, const ExcitationConfig& excitation,
                      double t_ns) {
  if (!excitation.reservoir_n0 || !excitation.reservoir_td_ns) {
    throw std::invalid_argument("reservoir_n0 and reservoir_td must be set");
  }
  if (!(emitter.tau_e_ns > 0.0)) {
    throw std::invalid_argument("reservoir refill requires tau_e > 0");
  }
  return *excitation.reservoir_n0 / emitter.tau_e_ns *
         std::exp(-t_ns / *excitation.reservoir_td_ns);
}

OccupationTrajectory solve_reservoir_occupation(const EmitterModel& emitter,
                                                const ExcitationConfig& excitation,
                                                std::span<const double> grid) {
  require_lifetime(emitter);
  if (!excitation.reservoir_n0 || !excitation.reservoir_td_ns) {
    throw std::invalid_argument("reservoir_n0 and reservoir_td must be set");
  }
  if (!(*excitation.reservoir_n0 >= 0.0) || !(*excitation.reservoir_td_ns > 0.0)) {
    throw std::invalid_argument("reservoir_n0 >= 0 and reservoir_td > 0 required");
  }
  if (!(emitter.tau_e_ns > 0.0)) {
    throw std::invalid_argument("reservoir refill requires tau_e > 0");
  }
  if (grid.empty()) return {};
  if (grid.front() < 0.0) throw std::invalid_argument("grid must start at t >= 0");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("grid must be increasing");
  }
  if (excitation.mode == ExcitationMode::pulsed &&
      grid.back() - grid.front() > excitation.pulse_period_ns) {
    throw std::invalid_argument("grid exceeds one pulse period");
  }

  const double inv_t1 = 1.0 / emitter.t1_ns;
  const double r0 = *excitation.reservoir_n0 / emitter.tau_e_ns;
  const double inv_td = 1.0 / *excitation.reservoir_td_ns;

  using State = std::array<double, 1>;
  auto rhs = [&](const State& p, State& dp, double t) {
    const double refill = r0 * std::exp(-t * inv_td);
    dp[0] = -p[0] * inv_t1 + refill * (1.0 - p[0]);
  };

  OccupationTrajectory out;
  out.times.assign(grid.begin(), grid.end());
  out.p1.reserve(grid.size());

  namespace odeint = boost::numeric::odeint;
  auto stepper = odeint::make_dense_output(1e-12, 1e-8, odeint::runge_kutta_dopri5<State>());

  std::vector<double> times;
  times.reserve(grid.size() + 1);
  if (grid.front() > 0.0) times.push_back(0.0);
  times.insert(times.end(), grid.begin(), grid.end());
  const bool skip_first = grid.front() > 0.0;

  State p{0.0};
  bool failed = false;
  std::size_t index = 0;
  odeint::integrate_times(stepper, rhs, p, times.begin(), times.end(),
                          std::max(1e-4, (grid.back() + 1.0) * 1e-4),
                          [&](const State& s, double) {
                            if (!(s[0] >= -1e-6 && s[0] <= 1.0 + 1e-6)) failed = true;
                            if (!(skip_first && index == 0)) {
                              out.p1.push_back(std::clamp(s[0], 0.0, 1.0));
                            }
                            ++index;
                          });
  if (failed || out.p1.size() != grid.size()) {
    throw std::runtime_error("integration failure");
  }
  return out;
}

double coherence_time_from_dephasing(double t1_ns, double tau_d_ns) {
  if (!(t1_ns > 0.0)) throw std::invalid_argument("t1 must be > 0");
  if (!(tau_d_ns > 0.0)) throw std::invalid_argument("tau_d must be > 0");
  return 1.0 / (0.5 / t1_ns + 1.0 / tau_d_ns);
}

}  // namespace hombench::dynamics
