#include "hombench/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "hombench/dynamics.hpp"
#include "hombench/hom.hpp"

namespace hombench::fitting {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kTinyObjectivePerPoint = 1e-28;
constexpr double kMaxDamping = 1e16;

class Problem {
 public:
  Problem(const std::vector<Parameter>& params, const ResidualFunction& fn)
      : params_(params), fn_(fn), full_(params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      full_[i] = params[i].value;
      if (params[i].free) free_.push_back(i);
    }
    lower_.resize(static_cast<Eigen::Index>(free_.size()));
    upper_.resize(lower_.size());
    for (std::size_t k = 0; k < free_.size(); ++k) {
      lower_[static_cast<Eigen::Index>(k)] = params[free_[k]].lower;
      upper_[static_cast<Eigen::Index>(k)] = params[free_[k]].upper;
    }
  }

  Eigen::Index dim() const { return static_cast<Eigen::Index>(free_.size()); }
  const std::vector<std::size_t>& free_indices() const { return free_; }

  VectorXd start() const {
    VectorXd x(dim());
    for (Eigen::Index k = 0; k < dim(); ++k) x[k] = full_[free_[static_cast<std::size_t>(k)]];
    return clamp(x);
  }

  VectorXd clamp(VectorXd x) const {
    for (Eigen::Index k = 0; k < dim(); ++k) x[k] = std::clamp(x[k], lower_[k], upper_[k]);
    return x;
  }

  /// Residual vector; empty when the model cannot be evaluated.
  bool residuals(const VectorXd& x, VectorXd& out) const {
    for (Eigen::Index k = 0; k < dim(); ++k) full_[free_[static_cast<std::size_t>(k)]] = x[k];
    try {
      fn_(full_, buffer_);
    } catch (const std::exception&) {
      return false;
    }
    out = Eigen::Map<const VectorXd>(buffer_.data(), static_cast<Eigen::Index>(buffer_.size()));
    return out.allFinite();
  }

  double objective(const VectorXd& x) const {
    VectorXd r;
    if (!residuals(x, r)) return kInf;
    return r.squaredNorm();
  }

  double step(const VectorXd& x, Eigen::Index k, double relative) const {
    const double mag = std::max(std::abs(x[k]), 1e-3);
    double h = relative * mag;
    if (x[k] + h > upper_[k]) h = -h;
    return h;
  }

  bool jacobian(const VectorXd& x, const VectorXd& r0, double relative, MatrixXd& jac) const {
    jac.resize(r0.size(), dim());
    VectorXd r;
    for (Eigen::Index k = 0; k < dim(); ++k) {
      VectorXd xh = x;
      const double h = step(x, k, relative);
      xh[k] += h;
      if (!residuals(xh, r) || r.size() != r0.size()) return false;
      jac.col(k) = (r - r0) / h;
    }
    return true;
  }

  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::vector<double> full(const VectorXd& x) const {
    std::vector<double> v = full_;
    for (Eigen::Index k = 0; k < dim(); ++k) v[free_[static_cast<std::size_t>(k)]] = x[k];
    return v;
  }

 private:
  const std::vector<Parameter>& params_;
  const ResidualFunction& fn_;
  std::vector<std::size_t> free_;
  VectorXd lower_, upper_;
  mutable std::vector<double> full_;
  mutable std::vector<double> buffer_;
};

struct StageResult {
  VectorXd x;
  double objective = kInf;
  int iterations = 0;
  bool converged = false;
};

StageResult nelder_mead(const Problem& p, const VectorXd& x0, const FitOptions& o,
                        double tiny, FitTrace* trace) {
  const Eigen::Index n = p.dim();
  std::vector<VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
  for (Eigen::Index k = 0; k < n; ++k) {
    double h = std::abs(x0[k]) > 0.0 ? 0.05 * std::abs(x0[k]) : 0.05;
    const double range = p.upper()[k] - p.lower()[k];
    if (std::isfinite(range)) h = std::min(h, 0.25 * range);
    VectorXd& v = pts[static_cast<std::size_t>(k + 1)];
    v[k] = x0[k] + h <= p.upper()[k] ? x0[k] + h : x0[k] - h;
    v = p.clamp(v);
  }
  std::vector<double> f(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) f[i] = p.objective(pts[i]);
  std::vector<std::size_t> idx(pts.size());

  StageResult out;
  double last_best = kInf;
  int it = 0;
  for (; it < o.simplex_iterations; ++it) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    const double best = f[idx.front()], worst = f[idx.back()];
    if (trace && best < last_best) trace->objective.push_back(best);
    last_best = std::min(last_best, best);
    if (best <= tiny || (std::isfinite(worst) && worst - best <= o.relative_tolerance * best)) break;

    VectorXd centroid = VectorXd::Zero(n);
    for (std::size_t i = 0; i + 1 < idx.size(); ++i) centroid += pts[idx[i]];
    centroid /= static_cast<double>(n);
    const std::size_t w = idx.back();
    const VectorXd xr = p.clamp(centroid + (centroid - pts[w]));
    const double fr = p.objective(xr);
    if (fr < best) {
      const VectorXd xe = p.clamp(centroid + 2.0 * (centroid - pts[w]));
      const double fe = p.objective(xe);
      if (fe < fr) {
        pts[w] = xe, f[w] = fe;
      } else {
        pts[w] = xr, f[w] = fr;
      }
    } else if (fr < f[idx[idx.size() - 2]]) {
      pts[w] = xr, f[w] = fr;
    } else {
      const VectorXd xc = fr < worst ? p.clamp(centroid + 0.5 * (xr - centroid))
                                     : p.clamp(centroid + 0.5 * (pts[w] - centroid));
      const double fc = p.objective(xc);
      if (fc < std::min(fr, worst)) {
        pts[w] = xc, f[w] = fc;
      } else {
        const VectorXd& xb = pts[idx.front()];
        for (std::size_t i = 1; i < idx.size(); ++i) {
          VectorXd& v = pts[idx[i]];
          v = p.clamp(xb + 0.5 * (v - xb));
          f[idx[i]] = p.objective(v);
        }
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
  out.x = pts[best];
  out.objective = f[best];
  out.iterations = it;
  if (trace && out.objective < last_best) trace->objective.push_back(out.objective);
  return out;
}

StageResult levenberg_marquardt(const Problem& p, const VectorXd& x0, const FitOptions& o,
                                double tiny, FitTrace* trace) {
  StageResult out;
  out.x = x0;
  VectorXd r;
  if (!p.residuals(out.x, r)) return out;
  out.objective = r.squaredNorm();
  double lambda = 1e-3;
  MatrixXd jac;
  for (int it = 0; it < o.max_iterations; ++it) {
    out.iterations = it + 1;
    if (out.objective <= tiny) {
      out.converged = true;
      return out;
    }
    if (!p.jacobian(out.x, r, o.fd_relative_step, jac)) return out;
    const MatrixXd a = jac.transpose() * jac;
    const VectorXd g = jac.transpose() * r;
    const double diag_floor = 1e-12 * std::max(1e-300, a.diagonal().maxCoeff());
    bool accepted = false;
    while (lambda <= kMaxDamping) {
      MatrixXd damped = a;
      for (Eigen::Index k = 0; k < a.rows(); ++k) {
        damped(k, k) += lambda * std::max(a(k, k), diag_floor);
      }
      const VectorXd delta = damped.ldlt().solve(-g);
      const VectorXd x_new = p.clamp(out.x + delta);
      VectorXd r_new;
      const double f_new = p.residuals(x_new, r_new) ? r_new.squaredNorm() : kInf;
      if (f_new < out.objective) {
        const double previous = out.objective;
        out.x = x_new;
        r = r_new;
        out.objective = f_new;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (trace) trace->objective.push_back(f_new);
        if (previous - f_new <= o.relative_tolerance * previous || f_new <= tiny) {
          out.converged = true;
          return out;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No downhill step at any damping: stationary within bounds.
      out.converged = true;
      return out;
    }
  }
  return out;
}

// Linear amplitude minimising sum w^2 (a m - y)^2.
double best_amplitude(const std::vector<double>& model, const std::vector<double>& data) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double w2 = 1.0 / std::max(data[i], 1.0);
    num += w2 * model[i] * data[i];
    den += w2 * model[i] * model[i];
  }
  return den > 0.0 ? std::max(0.0, num / den) : 0.0;
}

double weighted_sq(const std::vector<double>& model, double amp, const std::vector<double>& data) {
  double s = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double d = (amp * model[i] - data[i]) * poisson_weight(data[i]);
    s += d * d;
  }
  return s;
}

std::vector<double> logspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    v[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, n == 1 ? 0.0 : double(i) / (n - 1));
  }
  return v;
}

std::size_t find_param(const std::vector<Parameter>& ps, const std::string& name) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].name == name) return i;
  }
  return ps.size();
}

}  // namespace

double poisson_weight(double counts) { return 1.0 / std::sqrt(std::max(counts, 1.0)); }

FitResult least_squares(std::vector<Parameter> params, const ResidualFunction& residuals,
                        const FitOptions& options, FitTrace* trace) {
  for (const auto& p : params) {
    if (!(p.lower <= p.upper)) throw std::invalid_argument("invalid bounds for " + p.name);
  }
  const Problem problem(params, residuals);
  VectorXd x = problem.start();
  VectorXd r0;
  if (!problem.residuals(x, r0)) {
    throw std::invalid_argument("model cannot be evaluated at the start values");
  }
  const double tiny = kTinyObjectivePerPoint * static_cast<double>(std::max<Eigen::Index>(1, r0.size()));
  if (trace) trace->objective.push_back(r0.squaredNorm());

  FitResult result;
  int iterations = 0;
  bool converged = true;
  if (problem.dim() > 0) {
    if (options.simplex && r0.squaredNorm() > tiny) {
      const auto nm = nelder_mead(problem, x, options, tiny, trace);
      if (nm.objective < problem.objective(x)) x = nm.x;
      iterations += nm.iterations;
    }
    const auto lm = levenberg_marquardt(problem, x, options, tiny, trace);
    x = lm.x;
    iterations += lm.iterations;
    converged = lm.converged;
  }

  VectorXd r;
  problem.residuals(x, r);
  result.residual_norm = r.size() ? std::sqrt(r.squaredNorm() / static_cast<double>(r.size())) : 0.0;
  result.converged = converged;
  result.iterations = iterations;

  const auto values = problem.full(x);
  for (std::size_t i = 0; i < params.size(); ++i) {
    result.params[params[i].name] = values[i];
    result.uncertainties[params[i].name] = 0.0;
  }
  if (problem.dim() == 0) return result;

  MatrixXd jac;
  std::vector<double> sigma(static_cast<std::size_t>(problem.dim()), kInf);
  if (problem.jacobian(x, r, options.fd_relative_step, jac)) {
    const MatrixXd a = jac.transpose() * jac;
    const Eigen::Index n = a.rows();
    VectorXd d(n);
    for (Eigen::Index k = 0; k < n; ++k) d[k] = a(k, k) > 0.0 ? 1.0 / std::sqrt(a(k, k)) : 0.0;
    const MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(scaled);
    const VectorXd& lam = eig.eigenvalues();
    const MatrixXd& vec = eig.eigenvectors();
    const double cutoff = 1e-12 * std::max(lam.maxCoeff(), 1e-300);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (d[k] == 0.0) continue;
      double var = 0.0;
      bool singular = false;
      for (Eigen::Index m = 0; m < n; ++m) {
        const double v = vec(k, m);
        if (lam[m] <= cutoff) {
          if (std::abs(v) > 1e-6) singular = true;
          continue;
        }
        var += v * v / lam[m];
      }
      if (!singular) sigma[static_cast<std::size_t>(k)] = d[k] * std::sqrt(var);
    }
  }
  const auto& free = problem.free_indices();
  for (std::size_t k = 0; k < free.size(); ++k) {
    const Parameter& p = params[free[k]];
    double s = sigma[k];
    const double magnitude = std::max(std::abs(values[free[k]]), p.scale);
    if (std::isfinite(s) && s > options.unbounded_ratio * magnitude) s = kInf;
    if (!std::isfinite(s)) result.warnings.push_back("unbounded uncertainty: " + p.name);
    result.uncertainties[p.name] = s;
  }
  if (!converged) result.warnings.emplace_back("iteration limit reached");
  return result;
}

// ---------------------------------------------------------------------------

FitResult joint_hom_fit(const HomFitData& data, const std::map<std::string, double>& fixed,
                        const std::set<std::string>& free_in, const FitOptions& options,
                        FitTrace* trace) {
  const bool pulsed = data.excitation.mode == ExcitationMode::pulsed;
  const bool has_g2 = data.g2.size() > 0;
  require_valid(validate(data.g_perp), "g_perp histogram");
  require_valid(validate(data.g_parallel), "g_parallel histogram");
  if (has_g2) require_valid(validate(data.g2), "g2 histogram");
  if (data.g_perp.size() != data.g_parallel.size() ||
      std::abs(data.g_perp.bin_width - data.g_parallel.bin_width) > 1e-12 ||
      (has_g2 && std::abs(data.g2.bin_width - data.g_perp.bin_width) > 1e-12)) {
    throw std::invalid_argument("mismatched binning across HOM histograms");
  }
  for (std::size_t i = 0; i < data.g_perp.size(); ++i) {
    if (std::abs(data.g_perp.delays[i] - data.g_parallel.delays[i]) > 1e-9) {
      throw std::invalid_argument("mismatched binning across HOM histograms");
    }
  }

  const bool separate = data.mzi_parallel.has_value() || fixed.contains("t_bs1_par") ||
                        fixed.contains("t_bs2_par") || free_in.contains("t_bs1_par") ||
                        free_in.contains("t_bs2_par");
  const InterferometerModel par0 = data.mzi_parallel.value_or(data.mzi);
  const auto& em = data.emitter;

  std::vector<Parameter> ps{
      {"t1", em.t1_ns, 0.01, 100.0, false},
      {pulsed ? "tau_e" : "r", pulsed ? em.tau_e_ns : em.r_cw_per_ns, 0.0, pulsed ? 50.0 : 10.0, false, 0.1},
      {"tau_c_prime", em.tau_c_prime_ns, 1e-3, 50.0, false},
      {"f", em.f_overlap, 0.0, 1.0, false},
      {"t_bs1", data.mzi.t_bs1, 0.0, 1.0, false},
      {"t_bs2", data.mzi.t_bs2, 0.0, 1.0, false},
  };
  if (separate) {
    ps.push_back({"t_bs1_par", par0.t_bs1, 0.0, 1.0, false});
    ps.push_back({"t_bs2_par", par0.t_bs2, 0.0, 1.0, false});
  }
  if (has_g2) ps.push_back({"amp_g2", 1.0, 0.0, kInf, true});
  ps.push_back({"amp_perp", 1.0, 0.0, kInf, true});
  ps.push_back({"amp_par", 1.0, 0.0, kInf, true});

  std::set<std::string> free = free_in;
  if (free.empty()) {
    free = {pulsed ? "tau_e" : "r", "tau_c_prime", "t_bs1", "t_bs2"};
    if (data.mzi_parallel) free.insert({"t_bs1_par", "t_bs2_par"});
    for (const auto& [name, value] : fixed) free.erase(name);
  }
  for (const auto& name : free) {
    const auto i = find_param(ps, name);
    if (i == ps.size()) throw std::invalid_argument("unknown fit parameter: " + name);
    if (fixed.contains(name)) throw std::invalid_argument("parameter both free and fixed: " + name);
    ps[i].free = true;
  }
  for (const auto& [name, value] : fixed) {
    const auto i = find_param(ps, name);
    if (i == ps.size()) throw std::invalid_argument("unknown fit parameter: " + name);
    ps[i].value = value;
    ps[i].free = false;
  }

  const std::size_t i_t1 = 0, i_rate = 1, i_tc = 2, i_f = 3, i_t1b = 4, i_t2b = 5;
  const std::size_t i_t1p = find_param(ps, "t_bs1_par"), i_t2p = find_param(ps, "t_bs2_par");
  const std::size_t i_ag = find_param(ps, "amp_g2"), i_ap = find_param(ps, "amp_perp"),
                    i_aq = find_param(ps, "amp_par");

  struct Curves {
    std::vector<double> g2, perp, par;
  };
  auto evaluate = [&](std::span<const double> v) {
    EmitterModel e = em;
    e.t1_ns = v[i_t1];
    (pulsed ? e.tau_e_ns : e.r_cw_per_ns) = v[i_rate];
    e.tau_c_prime_ns = v[i_tc];
    e.f_overlap = v[i_f];
    InterferometerModel perp = data.mzi;
    perp.set_bs1(v[i_t1b]);
    perp.set_bs2(v[i_t2b]);
    InterferometerModel par = perp;
    if (separate) {
      par.set_bs1(v[i_t1p]);
      par.set_bs2(v[i_t2p]);
    }
    const hom::HomModel model(e, perp, par, data.excitation);
    Curves c;
    auto g2_fn = [&](double t) { return model.g2(t); };
    if (data.point_samples) {
      auto [cp, cq] = hom::sample_hom_points(model, data.g_perp, data.detector);
      c.perp = std::move(cp.values);
      c.par = std::move(cq.values);
      if (has_g2) {
        const auto cusps = model.cusps(data.g2.delays.front() - 10.0, data.g2.delays.back() + 10.0);
        c.g2 = hom::sample_points(g2_fn, data.g2, data.detector, cusps).values;
      }
    } else {
      auto [cp, cq] = hom::sample_hom(model, data.g_perp, data.detector);
      c.perp = std::move(cp.values);
      c.par = std::move(cq.values);
      if (has_g2) c.g2 = hom::sample_model(g2_fn, data.g2, data.detector).values;
    }
    return c;
  };

  // Coarse scan over tau_c' and the excitation parameter with linear amplitudes.
  {
    std::vector<double> v(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) v[i] = ps[i].value;
    auto score = [&](std::vector<double>& vals) {
      try {
        const Curves c = evaluate(vals);
        double s = 0.0;
        const double ap = best_amplitude(c.perp, data.g_perp.values);
        const double aq = best_amplitude(c.par, data.g_parallel.values);
        s += weighted_sq(c.perp, ap, data.g_perp.values) + weighted_sq(c.par, aq, data.g_parallel.values);
        vals[i_ap] = ap;
        vals[i_aq] = aq;
        if (has_g2) {
          const double ag = best_amplitude(c.g2, data.g2.values);
          s += weighted_sq(c.g2, ag, data.g2.values);
          vals[i_ag] = ag;
        }
        return s;
      } catch (const std::exception&) {
        return kInf;
      }
    };
    std::vector<double> best = v;
    double best_score = score(best);
    const auto tc_grid = ps[i_tc].free ? logspace(0.05, 4.0, 16) : std::vector<double>{v[i_tc]};
    std::vector<double> rate_grid{v[i_rate]};
    if (ps[i_rate].free) {
      rate_grid = pulsed ? std::vector<double>{0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0, 3.0, 5.0}
                         : logspace(0.01, 2.0, 12);
    }
    if (ps[i_tc].free || ps[i_rate].free) {
      for (double tc : tc_grid) {
        for (double rate : rate_grid) {
          std::vector<double> cand = v;
          cand[i_tc] = tc;
          cand[i_rate] = rate;
          const double s = score(cand);
          if (s < best_score) best_score = s, best = cand;
        }
      }
    }
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].value = best[i];
  }

  const ResidualFunction residuals = [&](std::span<const double> v, std::vector<double>& out) {
    const Curves c = evaluate(v);
    out.clear();
    auto push = [&](const std::vector<double>& m, double amp, const std::vector<double>& y) {
      for (std::size_t i = 0; i < m.size(); ++i) out.push_back((amp * m[i] - y[i]) * poisson_weight(y[i]));
    };
    if (has_g2) push(c.g2, v[i_ag], data.g2.values);
    push(c.perp, v[i_ap], data.g_perp.values);
    push(c.par, v[i_aq], data.g_parallel.values);
  };
  FitResult result = least_squares(ps, residuals, options, trace);
  // The model is symmetric under t <-> r at BS1; report the smaller coefficient.
  for (const char* name : {"t_bs1", "t_bs1_par"}) {
    const auto i = find_param(ps, name);
    if (i < ps.size() && ps[i].free && result.params.at(name) > 0.5) {
      result.params[name] = 1.0 - result.params.at(name);
    }
  }
  const double tc = result.params.at("tau_c_prime");
  const double t1 = result.params.at("t1");
  result.derived["tau_c_prime_over_2t1"] = tc / (2.0 * t1);
  if (tc > 2.0 * t1) result.warnings.emplace_back("tau_c_prime exceeds transform bound 2*t1");
  return result;
}

FitResult fit_lifetime(const Histogram& decay, const FitOptions& options, FitTrace* trace) {
  require_valid(validate(decay), "decay histogram");
  if (decay.size() < 5) throw std::invalid_argument("decay histogram needs at least 5 bins");
  const DetectorModel no_irf;
  auto profile = [&](double t1, double te) {
    EmitterModel e;
    e.t1_ns = t1;
    e.tau_e_ns = te;
    return hom::sample_model([&](double t) { return dynamics::pulsed_emission_profile(e, t); },
                             decay, no_irf)
        .values;
  };
  const auto& y = decay.values;

  // Linear solve for amplitude and background on a (t1, tau_e) grid.
  double best_score = kInf, best_t1 = 1.0, best_te = 0.0, best_a = 1.0, best_b = 0.0;
  for (double t1 : logspace(0.1, 30.0, 24)) {
    for (double te : {0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 5.0}) {
      const auto m = profile(t1, te);
      double smm = 0, sm = 0, s1 = 0, smy = 0, sy = 0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double w2 = 1.0 / std::max(y[i], 1.0);
        smm += w2 * m[i] * m[i];
        sm += w2 * m[i];
        s1 += w2;
        smy += w2 * m[i] * y[i];
        sy += w2 * y[i];
      }
      const double det = smm * s1 - sm * sm;
      double a = det != 0.0 ? (smy * s1 - sm * sy) / det : 0.0;
      double b = det != 0.0 ? (smm * sy - sm * smy) / det : 0.0;
      if (b < 0.0) b = 0.0, a = smm > 0 ? smy / smm : 0.0;
      a = std::max(a, 0.0);
      double s = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double d = (a * m[i] + b - y[i]) * poisson_weight(y[i]);
        s += d * d;
      }
      if (s < best_score) best_score = s, best_t1 = t1, best_te = te, best_a = a, best_b = b;
    }
  }
  const double ymax = *std::max_element(y.begin(), y.end());
  std::vector<Parameter> ps{
      {"t1", best_t1, 0.01, 100.0, true},
      {"tau_e", best_te, 0.0, 100.0, true, 0.1},
      {"amplitude", best_a, 0.0, kInf, true},
      {"background", best_b, 0.0, kInf, true, std::max(1.0, 1e-3 * ymax)},
  };
  const ResidualFunction residuals = [&](std::span<const double> v, std::vector<double>& out) {
    const auto m = profile(v[0], v[1]);
    out.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = (v[2] * m[i] + v[3] - y[i]) * poisson_weight(y[i]);
  };
  FitResult result = least_squares(ps, residuals, options, trace);
  // A rise time below the bin width is tested against tau_e = 0; the bound
  // is kept unless freeing tau_e lowers chi-square by at least one.
  if (result.params.at("tau_e") < 0.5 * decay.bin_width) {
    for (auto& p : ps) p.value = result.params.at(p.name);
    ps[1].value = 0.0;
    ps[1].free = false;
    FitResult pinned = least_squares(ps, residuals, options);
    const double n = static_cast<double>(decay.size());
    const auto chi2 = [n](const FitResult& r) { return r.residual_norm * r.residual_norm * n; };
    if (chi2(pinned) <= chi2(result) + 1.0) {
      pinned.uncertainties["tau_e"] = result.uncertainties.at("tau_e");
      result = std::move(pinned);
    }
  }
  if (result.params.at("tau_e") <= 1e-9) {
    result.warnings.emplace_back("tau_e pinned at lower bound 0");
  }
  return result;
}

FitResult fit_fringe(std::span<const FringePoint> points, const FringeFitOptions& options,
                     FitTrace* trace) {
  if (points.size() < 5) throw std::invalid_argument("fringe fit needs at least 5 points");
  for (const auto& p : points) {
    if (!std::isfinite(p.delay_ns) || !std::isfinite(p.visibility) || !(p.sigma > 0.0)) {
      throw std::invalid_argument("fringe points need finite values and sigma > 0");
    }
  }
  auto model = [](double t2, double tg, double ws, double d) {
    CoherenceModel c{t2, tg, ws};
    return coherence::g1_fringe(c, d);
  };
  auto score = [&](double t2, double tg, double ws) {
    double s = 0.0;
    for (const auto& p : points) {
      const double r = (model(t2, tg, ws, p.delay_ns) - p.visibility) / p.sigma;
      s += r * r;
    }
    return s;
  };

  std::vector<double> omega_grid{options.omega_s.value_or(0.0)};
  if (options.fit_splitting) {
    std::vector<double> d;
    for (const auto& p : points) d.push_back(std::abs(p.delay_ns));
    std::sort(d.begin(), d.end());
    double min_gap = kInf;
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (d[i] - d[i - 1] > 1e-12) min_gap = std::min(min_gap, d[i] - d[i - 1]);
    }
    if (!std::isfinite(min_gap)) min_gap = 1.0;
    const double omega_max = std::numbers::pi / min_gap;
    constexpr int kOmegaSteps = 240;
    if (!options.omega_s) omega_grid.clear();
    for (int i = 1; i <= kOmegaSteps; ++i) omega_grid.push_back(omega_max * i / kOmegaSteps);
  }
  double best = kInf, b2 = 1.0, bg = 1.0, bw = omega_grid.front();
  const auto grid = logspace(0.05, 50.0, 16);
  for (double ws : omega_grid) {
    for (double t2 : grid) {
      for (double tg : grid) {
        const double s = score(t2, tg, ws);
        if (s < best) best = s, b2 = t2, bg = tg, bw = ws;
      }
    }
  }

  std::vector<Parameter> ps{
      {"t2", b2, 1e-3, 1e4, true},
      {"t_g", bg, 1e-3, 1e4, true},
      {"omega_s", bw, 0.0, 1e3, options.fit_splitting},
  };
  const ResidualFunction residuals = [&](std::span<const double> v, std::vector<double>& out) {
    out.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      out[i] = (model(v[0], v[1], v[2], points[i].delay_ns) - points[i].visibility) / points[i].sigma;
    }
  };
  FitResult result = least_squares(ps, residuals, options.base, trace);
  const double t2 = result.params.at("t2"), tg = result.params.at("t_g");
  const double dl = coherence::lorentzian_fwhm(t2), dg = coherence::gaussian_fwhm(tg);
  result.derived["delta_l_ghz"] = dl;
  result.derived["delta_g_ghz"] = dg;
  result.derived["delta_v_ghz"] = coherence::voigt_fwhm(dl, dg);
  result.derived["tau_c_ns"] = coherence::coherence_time(CoherenceModel{t2, tg, 0.0});
  result.derived["splitting_ghz"] = result.params.at("omega_s") / std::numbers::pi;
  return result;
}

FitResult fit_spectrum(const CorrelationCurve& spectrum, const coherence::Etalon& etalon,
                       const SpectrumFitOptions& options, FitTrace* trace) {
  require_valid(validate(spectrum), "spectrum");
  if (spectrum.size() < 5) throw std::invalid_argument("spectrum fit needs at least 5 points");
  if (spectrum.delays.back() - spectrum.delays.front() >= etalon.fsr_ghz) {
    throw std::invalid_argument("order overlap");
  }
  const auto& x = spectrum.delays;
  const auto& y = spectrum.values;
  auto weight = [&](double v) {
    return options.point_sigma ? 1.0 / *options.point_sigma : poisson_weight(v);
  };
  auto forward = [&](const coherence::LineShape& s) {
    return coherence::etalon_convolve(coherence::spectrum_model(s, x), etalon).values;
  };

  // Start values from the data: peak, centroid and half-maximum width.
  const auto peak_it = std::max_element(y.begin(), y.end());
  const double peak = *peak_it;
  double sum = 0.0, first = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += y[i], first += y[i] * x[i];
  const double centroid = sum > 0.0 ? first / sum : x[x.size() / 2];
  std::size_t lo = 0, hi = y.size() - 1;
  while (lo < y.size() && y[lo] < 0.5 * peak) ++lo;
  while (hi > 0 && y[hi] < 0.5 * peak) --hi;
  const double width = std::max((hi > lo ? x[hi] - x[lo] : 0.0), 2.0 * spectrum.bin_width);
  const double span = x.back() - x.front();

  std::vector<double> split_grid{0.0};
  if (options.doublet) {
    split_grid.clear();
    for (int i = 1; i <= 60; ++i) split_grid.push_back(std::min(0.9 * span, 1.2 * width) * i / 60.0);
  }
  const std::vector<double> fractions{0.05, 0.2, 0.4, 0.6, 0.8, 1.0};
  double best = kInf;
  coherence::LineShape best_shape;
  double best_amp = peak;
  for (double split : split_grid) {
    const double line_width = std::max(width - split, 2.0 * spectrum.bin_width);
    for (double fl : fractions) {
      for (double fg : fractions) {
        coherence::LineShape s;
        s.delta_l_ghz = fl * line_width;
        s.delta_g_ghz = fg * line_width;
        s.center_ghz = options.doublet ? centroid : x[static_cast<std::size_t>(peak_it - y.begin())];
        s.splitting_ghz = split;
        const auto m = forward(s);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
          const double w2 = weight(y[i]) * weight(y[i]);
          num += w2 * m[i] * y[i];
          den += w2 * m[i] * m[i];
        }
        const double amp = den > 0.0 ? num / den : 0.0;
        double sc = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
          const double d = (amp * m[i] - y[i]) * weight(y[i]);
          sc += d * d;
        }
        if (sc < best) best = sc, best_shape = s, best_amp = amp;
      }
    }
  }

  std::vector<Parameter> ps{
      {"delta_l", best_shape.delta_l_ghz, 1e-6, 10.0 * span, true},
      {"delta_g", best_shape.delta_g_ghz, 1e-6, 10.0 * span, true},
      {"center", best_shape.center_ghz, x.front(), x.back(), true, width},
      {"amplitude", best_amp, 0.0, kInf, true},
  };
  if (options.doublet) ps.push_back({"splitting", best_shape.splitting_ghz, 0.0, span, true});
  const ResidualFunction residuals = [&](std::span<const double> v, std::vector<double>& out) {
    coherence::LineShape s;
    s.delta_l_ghz = v[0];
    s.delta_g_ghz = v[1];
    s.center_ghz = v[2];
    if (options.doublet) s.splitting_ghz = v[4];
    const auto m = forward(s);
    out.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = (v[3] * m[i] - y[i]) * weight(y[i]);
  };
  FitResult result = least_squares(ps, residuals, options.base, trace);
  const double dl = result.params.at("delta_l"), dg = result.params.at("delta_g");
  result.derived["delta_v_ghz"] = coherence::voigt_fwhm(dl, dg);
  result.derived["t2_ns"] = coherence::t2_from_lorentzian_fwhm(dl);
  result.derived["t_g_ns"] = coherence::t_g_from_gaussian_fwhm(dg);
  return result;
}

std::string format_report(const FitResult& r) {
  std::string out;
  out += "converged = " + std::string(r.converged ? "true" : "false") + "\n";
  out += "iterations = " + std::to_string(r.iterations) + "\n";
  out += "residual_norm = " + format_double(r.residual_norm) + "\n";
  for (const auto& [name, value] : r.params) out += "param." + name + " = " + format_double(value) + "\n";
  for (const auto& [name, value] : r.uncertainties) out += "sigma." + name + " = " + format_double(value) + "\n";
  for (const auto& [name, value] : r.derived) out += "derived." + name + " = " + format_double(value) + "\n";
  for (std::size_t i = 0; i < r.warnings.size(); ++i) {
    out += "warning." + std::to_string(i) + " = " + r.warnings[i] + "\n";
  }
  return out;
}

std::string format_report_csv(const FitResult& r) {
  std::string out = "parameter,value,sigma\n";
  for (const auto& [name, value] : r.params) {
    const auto it = r.uncertainties.find(name);
    out += name + "," + format_double(value) + "," +
           format_double(it == r.uncertainties.end() ? kInf : it->second) + "\n";
  }
  for (const auto& [name, value] : r.derived) out += name + "," + format_double(value) + ",nan\n";
  return out;
}

}  // namespace hombench::fitting
