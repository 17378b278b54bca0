#pragma once

// Bounded nonlinear least squares (simplex refinement followed by a damped
// Gauss-Newton polish) and the model fits built on it.

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hombench/coherence.hpp"
#include "hombench/core.hpp"

namespace hombench::fitting {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Parameter {
  std::string name;
  double value = 0.0;
  double lower = -kInf;
  double upper = kInf;
  bool free = true;
  double scale = 0.0;  ///< typical magnitude for the unbounded-uncertainty test
};

struct FitOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-10;
  double fd_relative_step = 1e-6;
  bool simplex = true;
  int simplex_iterations = 500;
  /// sigma > ratio * max(|value|, scale) is reported as unbounded (+inf).
  double unbounded_ratio = 10.0;
};

/// Objective values after every accepted iteration (simplex best point, then
/// Levenberg-Marquardt steps).
struct FitTrace {
  std::vector<double> objective;
};

/// Writes weighted residuals for the full parameter vector (free and fixed,
/// in declaration order).
using ResidualFunction =
    std::function<void(std::span<const double> values, std::vector<double>& residuals)>;

/// Minimises the sum of squared residuals over the free parameters within
/// their bounds. Uncertainties come from (J^T J)^-1 at the solution; fixed
/// parameters get 0, singular or unbounded directions +inf.
FitResult least_squares(std::vector<Parameter> params, const ResidualFunction& residuals,
                        const FitOptions& options = {}, FitTrace* trace = nullptr);

/// Poisson weight 1/sqrt(max(counts, 1)).
double poisson_weight(double counts);

struct HomFitData {
  Histogram g2;  ///< optional (empty when absent)
  Histogram g_perp;
  Histogram g_parallel;
  ExcitationConfig excitation;
  EmitterModel emitter;       ///< start and fixed values
  InterferometerModel mzi;    ///< delay and start coefficients
  std::optional<InterferometerModel> mzi_parallel;
  DetectorModel detector;     ///< IRF applied to every model curve
  bool point_samples = false; ///< data are model values at bin centres, not bin averages
};

/// Joint fit of g2, g_perp and g_parallel with Poisson weights. Parameter
/// names: t1, r, tau_e, tau_c_prime, f, t_bs1, t_bs2, t_bs1_par, t_bs2_par,
/// amp_g2, amp_perp, amp_par. Amplitudes are always free. An empty `free`
/// selects {r or tau_e, tau_c_prime, t_bs1, t_bs2}. Parallel coefficients
/// follow the cross-polarised ones unless freed, fixed or given separately.
/// Fitted BS1 transmissions are reported as min(t, 1 - t) since the curves
/// do not distinguish the two.
FitResult joint_hom_fit(const HomFitData& data, const std::map<std::string, double>& fixed = {},
                        const std::set<std::string>& free = {}, const FitOptions& options = {},
                        FitTrace* trace = nullptr);

/// A * profile(t; T1, tau_e) + background, bin-averaged on the decay grid
/// (t = 0 at the excitation pulse). Parameters t1, tau_e, amplitude,
/// background.
FitResult fit_lifetime(const Histogram& decay, const FitOptions& options = {},
                       FitTrace* trace = nullptr);

struct FringePoint {
  double delay_ns = 0.0;
  double visibility = 0.0;
  double sigma = 0.01;
};

struct FringeFitOptions {
  bool fit_splitting = false;
  std::optional<double> omega_s;  ///< fixed value or start when fitted
  FitOptions base;
};

/// Fits t2, t_g (and omega_s) of the fringe model; derived delta_l_ghz,
/// delta_g_ghz, delta_v_ghz, tau_c_ns and splitting_ghz.
FitResult fit_fringe(std::span<const FringePoint> points, const FringeFitOptions& options = {},
                     FitTrace* trace = nullptr);

struct SpectrumFitOptions {
  bool doublet = false;
  std::optional<double> point_sigma;  ///< default: Poisson weights
  FitOptions base;
};

/// Forward fit of amplitude * etalon(spectrum_model) to a scanned spectrum.
/// Parameters delta_l, delta_g, center, amplitude (and splitting); derived
/// delta_v_ghz, t2_ns, t_g_ns.
FitResult fit_spectrum(const CorrelationCurve& spectrum, const coherence::Etalon& etalon,
                       const SpectrumFitOptions& options = {}, FitTrace* trace = nullptr);

/// Flat `key = value` report.
std::string format_report(const FitResult& result);
/// CSV with header `parameter,value,sigma` (derived rows have sigma nan).
std::string format_report_csv(const FitResult& result);

}  // namespace hombench::fitting
