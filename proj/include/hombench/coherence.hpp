#pragma once

// First-order coherence: fringe visibility, Voigt lineshape and widths,
// coherence time and the scanning Fabry-Perot etalon.

#include <complex>
#include <span>

#include "hombench/core.hpp"

namespace hombench::coherence {

/// exp[-(pi/2)(d/TG)^2 - |d|/T2] |cos(omega_s d)|.
double g1_fringe(const CoherenceModel& coh, double delay_ns);

/// Lorentzian FWHM 1/(pi T2) in GHz.
double lorentzian_fwhm(double t2_ns);
/// Gaussian FWHM sqrt(2 ln 2)/(sqrt(pi) TG) in GHz.
double gaussian_fwhm(double t_g_ns);
double t2_from_lorentzian_fwhm(double delta_l_ghz);
double t_g_from_gaussian_fwhm(double delta_g_ghz);

/// 0.535 dL + sqrt(0.217 dL^2 + dG^2). Throws "degenerate lineshape" when
/// both widths are zero.
double voigt_fwhm(double delta_l_ghz, double delta_g_ghz);

/// Positive root tau_c = -TG^2/(pi T2) + sqrt((TG^2/(pi T2))^2 + 2 TG^2/pi).
double coherence_time(const CoherenceModel& coh);

/// 1/(2 pi T1) in GHz.
double transform_limit_linewidth(double t1_ns);

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz).
std::complex<double> faddeeva(std::complex<double> z);

/// Area-normalised Voigt profile with Lorentzian and Gaussian FWHMs.
double voigt_profile(double x, double delta_l, double delta_g);

struct LineShape {
  double delta_l_ghz = 0.0;
  double delta_g_ghz = 0.0;
  double center_ghz = 0.0;
  double splitting_ghz = 0.0;  ///< doublet separation, 0 for a single line
  double weight_ratio = 1.0;   ///< upper/lower line weight of the doublet
};

LineShape line_shape(const CoherenceModel& coh);

/// Line (or doublet) profile scaled to unit peak height.
CorrelationCurve spectrum_model(const LineShape& shape, std::span<const double> grid_ghz);
/// Symmetric Voigt from the coherence model; doublet split by omega_s/pi.
CorrelationCurve spectrum_model(const CoherenceModel& coh, std::span<const double> grid_ghz);

struct Etalon {
  double bandwidth_ghz = 0.25;
  double fsr_ghz = 40.75;
};

/// Airy transmission 1/(1 + K sin^2(pi d/FSR)), K set by the FWHM bandwidth.
double etalon_transmission(double detuning_ghz, const Etalon& etalon);

/// Spectrum as scanned by the etalon: each bin spread by the Airy response,
/// renormalised over the grid so the integral is preserved. Throws "order
/// overlap" when the span reaches the FSR.
CorrelationCurve etalon_convolve(const CorrelationCurve& spectrum, const Etalon& etalon);

}  // namespace hombench::coherence
