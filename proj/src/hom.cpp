#include "hombench/hom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace hombench::hom {
namespace {

constexpr double kKernelHalfWidthSigmas = 8.0;

// Bin-integrated unit Gaussian weights for offsets -half..half on step h.
std::vector<double> gaussian_weights(double sigma, double h, long half) {
  std::vector<double> w(static_cast<std::size_t>(2 * half + 1));
  const double s = std::numbers::sqrt2 * sigma;
  double total = 0.0;
  for (long k = -half; k <= half; ++k) {
    const double lo = (static_cast<double>(k) - 0.5) * h / s;
    const double hi = (static_cast<double>(k) + 0.5) * h / s;
    const double v = 0.5 * (std::erf(hi) - std::erf(lo));
    w[static_cast<std::size_t>(k + half)] = v;
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

struct FineGrid {
  std::vector<double> x;
  long pad = 0;
  int oversample = 1;
  double step = 0.0;
  double sigma = 0.0;
};

FineGrid make_fine_grid(const CorrelationCurve& like, const DetectorModel& detector,
                        int oversample) {
  if (like.size() == 0) throw std::invalid_argument("empty curve grid");
  if (!(like.bin_width > 0.0)) throw std::invalid_argument("bin width must be > 0");
  if (oversample < 1) throw std::invalid_argument("oversample must be >= 1");
  FineGrid g;
  g.oversample = oversample;
  g.step = like.bin_width / oversample;
  g.sigma = fwhm_to_sigma(detector.jitter_fwhm_ns());
  g.pad = g.sigma > 0.0 ? static_cast<long>(std::ceil(kKernelHalfWidthSigmas * g.sigma / g.step)) : 0;
  const std::size_t inner = like.size() * static_cast<std::size_t>(oversample);
  const double x0 = like.delays.front() - 0.5 * like.bin_width;
  g.x.resize(inner + 2 * static_cast<std::size_t>(g.pad));
  for (std::size_t m = 0; m < g.x.size(); ++m) {
    g.x[m] = x0 + (static_cast<double>(m) - static_cast<double>(g.pad) + 0.5) * g.step;
  }
  return g;
}

CorrelationCurve reduce_fine(const FineGrid& g, const std::vector<double>& f,
                             const CorrelationCurve& like, CurveKind kind) {
  CorrelationCurve out = like;
  out.kind = kind;
  const std::size_t inner = like.size() * static_cast<std::size_t>(g.oversample);
  std::vector<double> smooth(inner);
  if (g.pad > 0) {
    const auto w = gaussian_weights(g.sigma, g.step, g.pad);
    for (std::size_t m = 0; m < inner; ++m) {
      const std::size_t centre = m + static_cast<std::size_t>(g.pad);
      double acc = 0.0;
      for (long k = -g.pad; k <= g.pad; ++k) {
        acc += w[static_cast<std::size_t>(k + g.pad)] *
               f[static_cast<std::size_t>(static_cast<long>(centre) - k)];
      }
      smooth[m] = acc;
    }
  } else {
    std::copy(f.begin(), f.end(), smooth.begin());
  }
  for (std::size_t i = 0; i < like.size(); ++i) {
    double acc = 0.0;
    for (int s = 0; s < g.oversample; ++s) acc += smooth[i * g.oversample + s];
    out.values[i] = acc / g.oversample;
  }
  return out;
}

void require_same_grid(const CorrelationCurve& a, const CorrelationCurve& b) {
  if (a.size() != b.size() || std::abs(a.bin_width - b.bin_width) > 1e-12) {
    throw std::invalid_argument("histograms have mismatched binning");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a.delays[i] - b.delays[i]) > 1e-9) {
      throw std::invalid_argument("histograms have mismatched binning");
    }
  }
}

}  // namespace

PathWeights path_weights(const InterferometerModel& mzi) {
  const double t1 = mzi.t_bs1, r1 = mzi.r_bs1, t2 = mzi.t_bs2, r2 = mzi.r_bs2;
  return {4.0 * (t1 * t1 + r1 * r1) * r2 * t2, 4.0 * r1 * t1 * t2 * t2,
          4.0 * r1 * t1 * r2 * r2};
}

HomModel::HomModel(const EmitterModel& emitter, const InterferometerModel& perp,
                   const InterferometerModel& parallel, const ExcitationConfig& excitation)
    : emitter_(emitter),
      excitation_(excitation),
      perp_(path_weights(perp)),
      parallel_(path_weights(parallel)),
      delay_(perp.delay_p_ns) {
  require_valid(validate(emitter), "emitter");
  require_valid(validate(perp), "interferometer");
  require_valid(validate(parallel), "interferometer");
  require_valid(validate(excitation), "excitation");
  if (excitation.mode == ExcitationMode::pulsed) {
    pulsed_.emplace(emitter, excitation);
    parallel_tail_ = parallel_.minus * g2(-delay_) + parallel_.plus * g2(delay_);
  }
}

std::vector<double> HomModel::cusps(double lo, double hi) const {
  std::vector<double> out;
  auto add = [&](double x) {
    if (x >= lo && x <= hi) out.push_back(x);
  };
  if (!pulsed_) {
    for (double x : {-delay_, 0.0, delay_}) add(x);
  } else {
    const double t = pulsed_->period();
    const long n_lo = static_cast<long>(std::floor((lo - delay_) / t)) - 1;
    const long n_hi = static_cast<long>(std::ceil((hi + delay_) / t)) + 1;
    for (long n = n_lo; n <= n_hi; ++n) {
      for (double x : {n * t - delay_, n * t, n * t + delay_}) add(x);
    }
    add(0.0);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double HomModel::g2(double tau) const {
  return pulsed_ ? (*pulsed_)(tau) : dynamics::cw_g2(emitter_, tau);
}

double HomModel::dip(double tau) const {
  return emitter_.f_overlap * std::exp(-2.0 * std::abs(tau) / emitter_.tau_c_prime_ns);
}

double HomModel::perp_from(const PathWeights& w, double tau) const {
  return w.same * g2(tau) + w.minus * g2(tau - delay_) + w.plus * g2(tau + delay_);
}

HomPair HomModel::operator()(double tau) const {
  if (!std::isfinite(tau)) throw std::invalid_argument("invalid delay");
  HomPair out;
  out.perp = perp_from(perp_, tau);
  if (pulsed_) {
    out.parallel = perp_from(parallel_, tau) - parallel_tail_ * dip(tau);
  } else {
    const double different =
        parallel_.minus * g2(tau - delay_) + parallel_.plus * g2(tau + delay_);
    out.parallel = parallel_.same * g2(tau) + different * (1.0 - dip(tau));
  }
  return out;
}

double HomModel::central_from(const PathWeights& w, double tau) const {
  const double period = pulsed_->period();
  // Peaks of g2(tau - c) sit at c + nT (n != 0); keep those within T/2 of 0.
  auto centred = [&](double shift) {
    double acc = 0.0;
    const auto n_lo = static_cast<long>(std::ceil((-0.5 * period - shift) / period));
    const auto n_hi = static_cast<long>(std::floor((0.5 * period - shift) / period));
    for (long n = n_lo; n <= n_hi; ++n) {
      if (n == 0) continue;
      const double centre = shift + static_cast<double>(n) * period;
      if (std::abs(centre) >= 0.5 * period) continue;
      acc += pulsed_->central_peak(tau - centre);
    }
    return acc;
  };
  return w.same * centred(0.0) + w.minus * centred(delay_) + w.plus * centred(-delay_);
}

HomPair HomModel::central(double tau) const {
  if (!pulsed_) return (*this)(tau);
  HomPair out;
  out.perp = central_from(perp_, tau);
  out.parallel = central_from(parallel_, tau) - parallel_tail_ * dip(tau);
  return out;
}

HomPair cw_hom_pair(const EmitterModel& emitter, const InterferometerModel& mzi,
                    double tau_ns) {
  return cw_hom_pair(emitter, mzi, mzi, tau_ns);
}

HomPair cw_hom_pair(const EmitterModel& emitter, const InterferometerModel& perp,
                    const InterferometerModel& parallel, double tau_ns) {
  return HomModel(emitter, perp, parallel, ExcitationConfig{})(tau_ns);
}

HomPair pulsed_hom_pair(const EmitterModel& emitter, const InterferometerModel& mzi,
                        const ExcitationConfig& excitation, double tau_ns) {
  return pulsed_hom_pair(emitter, mzi, mzi, excitation, tau_ns);
}

HomPair pulsed_hom_pair(const EmitterModel& emitter, const InterferometerModel& perp,
                        const InterferometerModel& parallel,
                        const ExcitationConfig& excitation, double tau_ns) {
  if (excitation.mode != ExcitationMode::pulsed) {
    throw std::invalid_argument("pulsed_hom_pair requires pulsed excitation");
  }
  return HomModel(emitter, perp, parallel, excitation)(tau_ns);
}

std::optional<double> visibility(double g_perp, double g_parallel) {
  if (!(g_perp > 0.0)) return std::nullopt;
  return (g_perp - g_parallel) / g_perp;
}

CorrelationCurve visibility(const CorrelationCurve& g_perp,
                            const CorrelationCurve& g_parallel) {
  require_same_grid(g_perp, g_parallel);
  CorrelationCurve out;
  out.bin_width = g_perp.bin_width;
  out.kind = g_perp.kind;
  for (std::size_t i = 0; i < g_perp.size(); ++i) {
    if (auto v = visibility(g_perp.values[i], g_parallel.values[i])) {
      out.delays.push_back(g_perp.delays[i]);
      out.values.push_back(*v);
    }
  }
  return out;
}

double fwhm_to_sigma(double fwhm) {
  return fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

CorrelationCurve convolve_irf(const CorrelationCurve& curve, const DetectorModel& detector,
                              std::vector<std::string>* warnings) {
  require_valid(validate(detector), "detector");
  const double fwhm = detector.jitter_fwhm_ns();
  if (fwhm == 0.0 || curve.size() == 0) return curve;
  if (!(curve.bin_width > 0.0)) throw std::invalid_argument("bin width must be > 0");
  if (warnings && curve.bin_width > 0.5 * fwhm) warnings->push_back("under-resolved kernel");

  const double sigma = fwhm_to_sigma(fwhm);
  const long half = static_cast<long>(std::ceil(kKernelHalfWidthSigmas * sigma / curve.bin_width));
  const auto w = gaussian_weights(sigma, curve.bin_width, half);
  const long n = static_cast<long>(curve.size());

  CorrelationCurve out = curve;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (long i = 0; i < n; ++i) {
    const double v = curve.values[static_cast<std::size_t>(i)];
    if (v == 0.0) continue;
    const long lo = std::max(0L, i - half);
    const long hi = std::min(n - 1, i + half);
    double norm = 0.0;
    for (long j = lo; j <= hi; ++j) norm += w[static_cast<std::size_t>(j - i + half)];
    for (long j = lo; j <= hi; ++j) {
      out.values[static_cast<std::size_t>(j)] += v * w[static_cast<std::size_t>(j - i + half)] / norm;
    }
  }
  return out;
}

double convolve_point(const std::function<double(double)>& fn, double tau_ns,
                      double sigma_ns, const std::vector<double>& breakpoints) {
  if (!(sigma_ns > 0.0)) return fn(tau_ns);
  const double half = kKernelHalfWidthSigmas * sigma_ns;
  std::vector<double> cuts{-half, half};
  for (double b : breakpoints) {
    const double u = tau_ns - b;
    if (u > -half && u < half) cuts.push_back(u);
  }
  std::sort(cuts.begin(), cuts.end());
  const double norm = 1.0 / (sigma_ns * std::sqrt(2.0 * std::numbers::pi));
  auto integrand = [&](double u) {
    return fn(tau_ns - u) * norm * std::exp(-0.5 * (u / sigma_ns) * (u / sigma_ns));
  };
  double total = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    if (cuts[i] <= cuts[i - 1]) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, cuts[i - 1], cuts[i], 10, 1e-13);
  }
  return total;
}

CorrelationCurve sample_model(const std::function<double(double)>& fn,
                              const CorrelationCurve& like, const DetectorModel& detector,
                              int oversample) {
  const auto grid = make_fine_grid(like, detector, oversample);
  std::vector<double> f(grid.x.size());
  for (std::size_t m = 0; m < f.size(); ++m) f[m] = fn(grid.x[m]);
  return reduce_fine(grid, f, like, like.kind);
}

std::pair<CorrelationCurve, CorrelationCurve> sample_hom(const HomModel& model,
                                                         const CorrelationCurve& like,
                                                         const DetectorModel& detector,
                                                         int oversample) {
  const auto grid = make_fine_grid(like, detector, oversample);
  std::vector<double> perp(grid.x.size()), par(grid.x.size());
  for (std::size_t m = 0; m < grid.x.size(); ++m) {
    const auto p = model(grid.x[m]);
    perp[m] = p.perp;
    par[m] = p.parallel;
  }
  return {reduce_fine(grid, perp, like, CurveKind::g2_perp),
          reduce_fine(grid, par, like, CurveKind::g2_parallel)};
}

CorrelationCurve sample_points(const std::function<double(double)>& fn,
                               const CorrelationCurve& like, const DetectorModel& detector,
                               const std::vector<double>& breakpoints) {
  require_valid(validate(detector), "detector");
  const double sigma = fwhm_to_sigma(detector.jitter_fwhm_ns());
  CorrelationCurve out = like;
  for (std::size_t i = 0; i < like.size(); ++i) {
    out.values[i] = convolve_point(fn, like.delays[i], sigma, breakpoints);
  }
  return out;
}

std::pair<CorrelationCurve, CorrelationCurve> sample_hom_points(const HomModel& model,
                                                                const CorrelationCurve& like,
                                                                const DetectorModel& detector) {
  std::vector<double> cusps;
  if (like.size() > 0) {
    const double pad = kKernelHalfWidthSigmas * fwhm_to_sigma(detector.jitter_fwhm_ns());
    cusps = model.cusps(like.delays.front() - pad, like.delays.back() + pad);
  }
  auto perp = sample_points([&](double t) { return model(t).perp; }, like, detector, cusps);
  auto par = sample_points([&](double t) { return model(t).parallel; }, like, detector, cusps);
  perp.kind = CurveKind::g2_perp;
  par.kind = CurveKind::g2_parallel;
  return {std::move(perp), std::move(par)};
}

double window_sum(const CorrelationCurve& curve, double lo, double hi) {
  double acc = 0.0;
  const double half = 0.5 * curve.bin_width;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double a = std::max(lo, curve.delays[i] - half);
    const double b = std::min(hi, curve.delays[i] + half);
    if (b > a) acc += curve.values[i] * (b - a) / curve.bin_width;
  }
  return acc;
}

IntegratedVisibility integrated_visibility(const CorrelationCurve& g_perp,
                                           const CorrelationCurve& g_parallel,
                                           const ExcitationConfig& excitation,
                                           const VisibilityCorrections& corrections,
                                           const std::optional<FittedHomModel>& fitted) {
  if (excitation.mode != ExcitationMode::pulsed) {
    throw std::invalid_argument("integrated visibility requires pulsed excitation");
  }
  require_valid(validate(excitation), "excitation");
  require_same_grid(g_perp, g_parallel);
  if (g_perp.size() == 0) throw std::invalid_argument("empty histogram");
  const double period = excitation.pulse_period_ns;
  const double lo = -0.5 * period, hi = 0.5 * period;
  const double half = 0.5 * g_perp.bin_width;
  if (g_perp.delays.front() - half > lo + 1e-9 || g_perp.delays.back() + half < hi - 1e-9) {
    throw std::invalid_argument("integration window [-T/2, T/2] exceeds histogram support");
  }
  const bool any = corrections.side_peak_removal || corrections.rebalance_to_5050;
  if (any && !fitted) throw std::invalid_argument("missing fit parameters");

  IntegratedVisibility out;
  CorrelationCurve perp = g_perp;
  CorrelationCurve par = g_parallel;
  if (corrections.rebalance_to_5050) {
    InterferometerModel nominal = fitted->perp;
    nominal.set_bs1(0.5);
    nominal.set_bs2(0.5);
    const HomModel model(fitted->emitter, nominal, nominal, excitation);
    const bool central = corrections.side_peak_removal;
    perp = sample_model([&](double t) { return central ? model.central(t).perp : model(t).perp; },
                        g_perp, fitted->detector);
    par = sample_model(
        [&](double t) { return central ? model.central(t).parallel : model(t).parallel; },
        g_parallel, fitted->detector);
  } else if (corrections.side_peak_removal) {
    const HomModel model(fitted->emitter, fitted->perp, fitted->parallel, excitation);
    const auto [full_perp, full_par] = sample_hom(model, g_perp, fitted->detector);
    const auto core_perp = sample_model([&](double t) { return model.central(t).perp; },
                                        g_perp, fitted->detector);
    const auto core_par = sample_model([&](double t) { return model.central(t).parallel; },
                                       g_parallel, fitted->detector);
    auto subtract_sides = [](CorrelationCurve& data, const CorrelationCurve& full,
                             const CorrelationCurve& core) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        num += data.values[i] * full.values[i];
        den += full.values[i] * full.values[i];
      }
      const double amplitude = den > 0.0 ? num / den : 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        data.values[i] -= amplitude * (full.values[i] - core.values[i]);
      }
    };
    subtract_sides(perp, full_perp, core_perp);
    subtract_sides(par, full_par, core_par);
  }
  if (corrections.side_peak_removal) out.applied.emplace_back("side-peaks");
  if (corrections.rebalance_to_5050) out.applied.emplace_back("rebalance");

  out.perp_integral = window_sum(perp, lo, hi);
  out.parallel_integral = window_sum(par, lo, hi);
  if (!(out.perp_integral > 0.0)) {
    throw std::invalid_argument("cross-polarised integral is not positive");
  }
  out.value = (out.perp_integral - out.parallel_integral) / out.perp_integral;
  return out;
}

double effective_overlap(double f_overlap, double hwp_deg) {
  const double c = std::cos(2.0 * hwp_deg * std::numbers::pi / 180.0);
  return f_overlap * c * c;
}

double hwp_visibility(const EmitterModel& emitter, const InterferometerModel& mzi,
                      const DetectorModel& detector, double phi_deg) {
  EmitterModel rotated = emitter;
  rotated.f_overlap = effective_overlap(emitter.f_overlap, phi_deg);
  const HomModel model(rotated, mzi, ExcitationConfig{});
  const double sigma = fwhm_to_sigma(detector.jitter_fwhm_ns());
  const std::vector<double> cusps{0.0, -mzi.delay_p_ns, mzi.delay_p_ns};
  const double perp = convolve_point([&](double t) { return model(t).perp; }, 0.0, sigma, cusps);
  const double par = convolve_point([&](double t) { return model(t).parallel; }, 0.0, sigma, cusps);
  return (perp - par) / perp;
}

}  // namespace hombench::hom
