#pragma once

// Hong-Ou-Mandel coincidence models behind an unbalanced Mach-Zehnder
// interferometer, visibility extraction and detector-response convolution.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hombench/core.hpp"
#include "hombench/dynamics.hpp"

namespace hombench::hom {

struct HomPair {
  double perp = 0.0;
  double parallel = 0.0;
};

/// Beamsplitter weights of the three g2 terms:
/// same-port 4(T1^2+R1^2)R2T2, delayed 4R1T1 T2^2, advanced 4R1T1 R2^2.
struct PathWeights {
  double same = 0.0;
  double minus = 0.0;  ///< multiplies g2(tau - delay)
  double plus = 0.0;   ///< multiplies g2(tau + delay)
};

PathWeights path_weights(const InterferometerModel& mzi);

/// Cross/co-polarised HOM model with cached g2. The parallel curve may use a
/// separate coefficient set (the delay is always taken from `perp`).
class HomModel {
 public:
  HomModel(const EmitterModel& emitter, const InterferometerModel& perp,
           const InterferometerModel& parallel, const ExcitationConfig& excitation);
  HomModel(const EmitterModel& emitter, const InterferometerModel& mzi,
           const ExcitationConfig& excitation)
      : HomModel(emitter, mzi, mzi, excitation) {}

  HomPair operator()(double tau_ns) const;
  double g2(double tau_ns) const;

  /// Part of each curve made of peaks centred within half a period of
  /// tau = 0 (pulsed only; CW returns the full curves).
  HomPair central(double tau_ns) const;

  ExcitationMode mode() const { return excitation_.mode; }
  double delay() const { return delay_; }
  /// Delays in [lo, hi] where the curves have cusps.
  std::vector<double> cusps(double lo, double hi) const;

 private:
  double perp_from(const PathWeights& w, double tau) const;
  double central_from(const PathWeights& w, double tau) const;
  double dip(double tau) const;

  EmitterModel emitter_;
  ExcitationConfig excitation_;
  PathWeights perp_;
  PathWeights parallel_;
  double delay_;
  std::optional<dynamics::PulsedCorrelation> pulsed_;
  double parallel_tail_ = 0.0;  // T2^2 g2(-delay) + R2^2 g2(+delay) weighted by 4R1T1
};

/// CW case (parallel = different-arm term times the coalescence
/// factor 1 - F exp(-2|tau|/tau_c')).
HomPair cw_hom_pair(const EmitterModel& emitter, const InterferometerModel& mzi,
                    double tau_ns);
HomPair cw_hom_pair(const EmitterModel& emitter, const InterferometerModel& perp,
                    const InterferometerModel& parallel, double tau_ns);

/// Pulsed case: parallel = perp minus the coalescence exponential weighted by
/// the g2 tail values at -+delay.
HomPair pulsed_hom_pair(const EmitterModel& emitter, const InterferometerModel& mzi,
                        const ExcitationConfig& excitation, double tau_ns);
HomPair pulsed_hom_pair(const EmitterModel& emitter, const InterferometerModel& perp,
                        const InterferometerModel& parallel,
                        const ExcitationConfig& excitation, double tau_ns);

/// (g_perp - g_parallel)/g_perp; empty when g_perp <= 0.
std::optional<double> visibility(double g_perp, double g_parallel);

/// Elementwise visibility; points with g_perp <= 0 are dropped.
CorrelationCurve visibility(const CorrelationCurve& g_perp,
                            const CorrelationCurve& g_parallel);

/// Gaussian sigma of an IRF with the given FWHM.
double fwhm_to_sigma(double fwhm);

/// Discrete convolution with a bin-integrated Gaussian of the detector FWHM.
/// Each bin's content is spread over the grid and renormalised, so the sum
/// of values is preserved exactly. Appends "under-resolved kernel" to
/// `warnings` when the bin width exceeds FWHM/2.
CorrelationCurve convolve_irf(const CorrelationCurve& curve, const DetectorModel& detector,
                              std::vector<std::string>* warnings = nullptr);

/// Gaussian-smoothed value of `fn` at `tau`, integrated adaptively and split
/// at `breakpoints` (cusps of the model).
double convolve_point(const std::function<double(double)>& fn, double tau_ns,
                      double sigma_ns, const std::vector<double>& breakpoints = {});

/// Bin-averaged model on the grid of `like`, IRF-convolved on an oversampled
/// padded grid first.
CorrelationCurve sample_model(const std::function<double(double)>& fn,
                              const CorrelationCurve& like, const DetectorModel& detector,
                              int oversample = 8);

/// Both HOM curves sampled on the grid of `like`.
std::pair<CorrelationCurve, CorrelationCurve> sample_hom(const HomModel& model,
                                                         const CorrelationCurve& like,
                                                         const DetectorModel& detector,
                                                         int oversample = 8);

/// Model values at the bin centres of `like`, Gaussian-smoothed point by
/// point when the detector has jitter.
CorrelationCurve sample_points(const std::function<double(double)>& fn,
                               const CorrelationCurve& like, const DetectorModel& detector,
                               const std::vector<double>& breakpoints = {});

std::pair<CorrelationCurve, CorrelationCurve> sample_hom_points(const HomModel& model,
                                                                const CorrelationCurve& like,
                                                                const DetectorModel& detector);

struct VisibilityCorrections {
  bool side_peak_removal = false;
  bool rebalance_to_5050 = false;
};

/// Fitted model used by the integrated-visibility corrections.
struct FittedHomModel {
  EmitterModel emitter;
  InterferometerModel perp;
  InterferometerModel parallel;
  DetectorModel detector;
};

struct IntegratedVisibility {
  double value = 0.0;
  double perp_integral = 0.0;
  double parallel_integral = 0.0;
  std::vector<std::string> applied;
};

/// Counts integrated over [-T/2, T/2] (partial bins weighted by overlap) and
/// combined into the visibility. side_peak_removal subtracts the fitted
/// model's peaks centred at +-T and beyond; rebalance_to_5050 replaces both
/// curves by the fitted model with 50:50 beamsplitters.
IntegratedVisibility integrated_visibility(const CorrelationCurve& g_perp,
                                           const CorrelationCurve& g_parallel,
                                           const ExcitationConfig& excitation,
                                           const VisibilityCorrections& corrections,
                                           const std::optional<FittedHomModel>& fitted);

/// Sum of curve values times the fraction of each bin inside [lo, hi].
double window_sum(const CorrelationCurve& curve, double lo, double hi);

/// F cos^2(2 phi).
double effective_overlap(double f_overlap, double hwp_deg);

/// CW zero-delay visibility at half-wave-plate angle phi, after the IRF:
/// (g_perp(0) - g_phi(0))/g_perp(0) where g_phi uses F cos^2(2 phi).
double hwp_visibility(const EmitterModel& emitter, const InterferometerModel& mzi,
                      const DetectorModel& detector, double phi_deg);

}  // namespace hombench::hom
