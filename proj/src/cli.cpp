#include "hombench/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>

#include "hombench/dynamics.hpp"
#include "hombench/fitting.hpp"

namespace hombench::cli {
namespace {

using std::numbers::pi;

constexpr double kRepetitionPeriodNs = 12.5;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double require_number(const std::string& text, const std::string& what) {
  const auto v = parse_double(text);
  if (!v) throw std::invalid_argument(what + ": not a number: '" + text + "'");
  return *v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_timestamp_file(const std::filesystem::path& path) {
  if (path.extension() == ".phts") return true;
  std::ifstream in(path);
  std::string header;
  return in && std::getline(in, header) && header.rfind("time_ps,channel", 0) == 0;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string curves_to_string(const std::string& x_name, const std::vector<std::string>& names,
                             const std::vector<const CorrelationCurve*>& curves) {
  std::ostringstream s;
  write_curves_csv(s, x_name, names, curves);
  return s.str();
}

int resolve_threads(std::optional<int> flag) {
  if (flag) return std::max(1, *flag);
  if (const char* env = std::getenv("HOMBENCH_THREADS")) {
    const auto v = parse_double(env);
    if (!v || *v < 1.0 || *v != std::floor(*v)) {
      throw std::invalid_argument("HOMBENCH_THREADS must be a positive integer");
    }
    return static_cast<int>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double pick(std::optional<double> flag, std::optional<double> config, double fallback) {
  if (flag) return *flag;
  if (config) return *config;
  return fallback;
}

DetectorModel no_jitter(DetectorModel d) {
  d.jitter_fwhm_ps = 0.0;
  return d;
}

CorrelationCurve g2_curve(const hom::HomModel& model, const CorrelationCurve& grid,
                          const DetectorModel& detector, bool point) {
  auto fn = [&](double t) { return model.g2(t); };
  if (!point) return hom::sample_model(fn, grid, detector);
  const double pad = 10.0;
  return hom::sample_points(fn, grid, detector,
                            model.cusps(grid.delays.front() - pad, grid.delays.back() + pad));
}

std::pair<CorrelationCurve, CorrelationCurve> hom_curves(const hom::HomModel& model,
                                                         const CorrelationCurve& grid,
                                                         const DetectorModel& detector,
                                                         bool point) {
  return point ? hom::sample_hom_points(model, grid, detector)
               : hom::sample_hom(model, grid, detector);
}

CorrelationCurve visibility_column(const CorrelationCurve& perp, const CorrelationCurve& par) {
  CorrelationCurve v = perp;
  v.kind = CurveKind::g2;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto x = hom::visibility(perp.values[i], par.values[i]);
    v.values[i] = x ? *x : std::nan("");
  }
  return v;
}

/// Fitted HOM parameters from a report (`param.*` keys) layered over `base`.
hom::FittedHomModel fitted_from_params(const std::map<std::string, double>& p,
                                       const CliConfig& base) {
  hom::FittedHomModel f{base.model.emitter, base.model.mzi,
                        base.mzi_parallel.value_or(base.model.mzi), base.model.detector};
  auto get = [&](const char* name, auto setter) {
    if (auto it = p.find(name); it != p.end()) setter(it->second);
  };
  get("t1", [&](double v) { f.emitter.t1_ns = v; });
  get("r", [&](double v) { f.emitter.r_cw_per_ns = v; });
  get("tau_e", [&](double v) { f.emitter.tau_e_ns = v; });
  get("tau_c_prime", [&](double v) { f.emitter.tau_c_prime_ns = v; });
  get("f", [&](double v) { f.emitter.f_overlap = v; });
  bool separate = p.contains("t_bs1_par") || p.contains("t_bs2_par") || base.mzi_parallel;
  get("t_bs1", [&](double v) { f.perp.set_bs1(v); });
  get("t_bs2", [&](double v) { f.perp.set_bs2(v); });
  if (!separate) {
    f.parallel.set_bs1(f.perp.t_bs1);
    f.parallel.set_bs2(f.perp.t_bs2);
  }
  get("t_bs1_par", [&](double v) { f.parallel.set_bs1(v); });
  get("t_bs2_par", [&](double v) { f.parallel.set_bs2(v); });
  f.parallel.delay_p_ns = f.perp.delay_p_ns;
  return f;
}

std::map<std::string, double> read_report_params(const std::filesystem::path& path) {
  const auto kv = KeyValueFile::load(path);
  std::map<std::string, double> out;
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("param.", 0) == 0) out[key.substr(6)] = require_number(value, key);
  }
  if (out.empty()) throw std::invalid_argument(path.string() + ": no fitted parameters in report");
  return out;
}

std::string summary_line(const std::string& key, double value) {
  return key + " = " + format_double(value) + "\n";
}

std::string summary_line(const std::string& key, const std::string& value) {
  return key + " = " + value + "\n";
}

/// Output sink: stdout, or a file when a path is given.
void emit(std::ostream& out, const std::optional<std::string>& path, const std::string& text) {
  if (path) {
    write_text(*path, text);
  } else {
    out << text;
  }
}

// ---------------------------------------------------------------- model

struct ModelArgs {
  std::string kind;
  std::optional<std::string> config, out;
  std::optional<double> bin, span;
  bool irf = false;
  std::string sampling = "point";
};

void cmd_model(const ModelArgs& a, std::ostream& out) {
  const CliConfig cfg = load_cli_config(a.config);
  const bool point = a.sampling == "point";
  const DetectorModel det = a.irf ? cfg.model.detector : no_jitter(cfg.model.detector);

  if (a.kind == "g1") {
    const double span = pick(a.span, cfg.span_ns, 1.2);
    const double bin = pick(a.bin, cfg.bin_ns, 0.01);
    const auto n = static_cast<std::size_t>(std::llround(span / bin)) + 1;
    auto c = make_curve(0.0, bin, n, CurveKind::g1);
    for (std::size_t i = 0; i < n; ++i) c.values[i] = coherence::g1_fringe(cfg.coherence, c.delays[i]);
    emit(out, a.out, curves_to_string("delay_ns", {"g1"}, {&c}));
    return;
  }
  if (a.kind == "spectrum") {
    const double span = pick(a.span, cfg.span_ns, 10.0);
    const double bin = pick(a.bin, cfg.bin_ns, 0.01);
    auto grid = make_symmetric_curve(span, bin, CurveKind::spectrum);
    const auto s = coherence::spectrum_model(cfg.coherence, grid.delays);
    const auto scanned = coherence::etalon_convolve(s, cfg.etalon);
    emit(out, a.out, curves_to_string("detuning_ghz", {"intensity", "scanned"}, {&s, &scanned}));
    return;
  }

  const bool pulsed = a.kind == "pulsed-g2" || a.kind == "pulsed-hom";
  ExcitationConfig exc = cfg.model.excitation;
  exc.mode = pulsed ? ExcitationMode::pulsed : ExcitationMode::cw;
  const double span = pick(a.span, cfg.span_ns, pulsed ? 40.0 : 30.0);
  const double bin = pick(a.bin, cfg.bin_ns, pulsed ? 0.2 : 0.05);
  const auto grid = make_symmetric_curve(span, bin, CurveKind::g2);
  const hom::HomModel model(cfg.model.emitter, cfg.model.mzi,
                            cfg.mzi_parallel.value_or(cfg.model.mzi), exc);
  const auto g2 = g2_curve(model, grid, det, point);
  if (a.kind == "cw-g2" || a.kind == "pulsed-g2") {
    emit(out, a.out, curves_to_string("tau_ns", {"g2"}, {&g2}));
    return;
  }
  const auto [perp, par] = hom_curves(model, grid, det, point);
  const auto v = visibility_column(perp, par);
  emit(out, a.out,
       curves_to_string("tau_ns", {"g2", "g_perp", "g_parallel", "visibility"}, {&g2, &perp, &par, &v}));
}

// ------------------------------------------------------------- simulate

struct SimulateArgs {
  std::optional<std::string> config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> duration;
  std::optional<std::int64_t> pulses;
};

void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  CliConfig cfg = load_cli_config(a.config);
  mc::SimConfig sim = cfg.sim;
  if (a.seed) sim.seed = *a.seed;
  if (a.duration) sim.duration_ns = *a.duration;
  if (a.pulses) sim.pulses = *a.pulses;
  if (sim.excitation.mode == ExcitationMode::cw && sim.duration_ns == 0.0) sim.duration_ns = 1e7;
  if (sim.excitation.mode == ExcitationMode::pulsed && sim.pulses == 0) sim.pulses = 1000000;
  const auto result = mc::run_simulation(sim, resolve_threads(a.threads));
  const std::filesystem::path path = *a.out;
  if (path.extension() == ".csv") {
    mc::write_timestamps_csv(path, result.streams);
  } else {
    mc::write_timestamps(path, result.streams);
  }
  const double seconds = result.duration_ns * 1e-9;
  std::string s;
  s += summary_line("output", path.string());
  s += summary_line("seed", std::to_string(sim.seed));
  s += summary_line("shards", std::to_string(result.shards));
  s += summary_line("emitted", std::to_string(result.emitted));
  s += summary_line("detected", std::to_string(result.detected));
  s += summary_line("start_events", std::to_string(result.streams.start.size()));
  s += summary_line("stop_events", std::to_string(result.streams.stop.size()));
  s += summary_line("duration_ns", result.duration_ns);
  if (seconds > 0.0) {
    s += summary_line("emitted_rate_cps", result.emitted / seconds);
    s += summary_line("detected_rate_cps", result.detected / seconds);
  }
  out << s;
}

// ------------------------------------------------------------ histogram

struct HistogramArgs {
  std::string input;
  std::optional<std::string> config, out;
  std::optional<double> bin, span;
};

void cmd_histogram(const HistogramArgs& a, std::ostream& out) {
  const CliConfig cfg = load_cli_config(a.config);
  const bool pulsed = cfg.model.excitation.mode == ExcitationMode::pulsed;
  const double bin = pick(a.bin, cfg.bin_ns, pulsed ? 0.2 : 0.05);
  const double span = pick(a.span, cfg.span_ns, pulsed ? 40.0 : 30.0);
  const auto h = load_histogram(a.input, "counts", CurveKind::g2, bin, span);
  emit(out, a.out, curves_to_string("tau_ns", {"counts"}, {&h}));
}

// ------------------------------------------------------------------ fit

struct FitArgs {
  std::string kind;
  std::optional<std::string> config, out, g2, perp, par, data;
  std::optional<double> bin, span;
  std::string free, fix;
  bool irf = false;
  bool doublet = false;
  std::string sampling = "bin";
};

void write_fit_outputs(const FitArgs& a, const FitResult& r, std::ostream& out,
                       const std::string& curves_csv) {
  const std::string report = fitting::format_report(r);
  out << report;
  if (a.out) {
    write_text(*a.out + ".txt", report);
    write_text(*a.out + ".csv", fitting::format_report_csv(r));
    if (!curves_csv.empty()) write_text(*a.out + "_curves.csv", curves_csv);
  }
}

void parse_fix(const std::string& list, const std::map<std::string, double>& defaults,
               std::map<std::string, double>& fixed) {
  for (const auto& item : split_list(list)) {
    const auto eq = item.find('=');
    if (eq != std::string::npos) {
      const auto name = item.substr(0, eq);
      fixed[name] = require_number(item.substr(eq + 1), "--fix " + name);
      continue;
    }
    const auto it = defaults.find(item);
    if (it == defaults.end()) throw std::invalid_argument("unknown fit parameter: " + item);
    fixed[item] = it->second;
  }
}

void cmd_fit(const FitArgs& a, std::ostream& out) {
  const CliConfig cfg = load_cli_config(a.config);
  const auto free_list = split_list(a.free);
  const std::set<std::string> free(free_list.begin(), free_list.end());

  if (a.kind == "hom") {
    if (!a.perp || !a.par) throw std::invalid_argument("fit hom requires --perp and --par");
    const bool pulsed = cfg.model.excitation.mode == ExcitationMode::pulsed;
    const double bin = pick(a.bin, cfg.bin_ns, pulsed ? 0.2 : 0.05);
    const double span = pick(a.span, cfg.span_ns, pulsed ? 40.0 : 30.0);
    fitting::HomFitData data;
    if (a.g2) data.g2 = load_histogram(*a.g2, "g2", CurveKind::g2, bin, span);
    data.g_perp = load_histogram(*a.perp, "g_perp", CurveKind::g2_perp, bin, span);
    data.g_parallel = load_histogram(*a.par, "g_parallel", CurveKind::g2_parallel, bin, span);
    data.excitation = cfg.model.excitation;
    data.emitter = cfg.model.emitter;
    data.mzi = cfg.model.mzi;
    data.mzi_parallel = cfg.mzi_parallel;
    data.detector = a.irf ? cfg.model.detector : no_jitter(cfg.model.detector);
    data.point_samples = a.sampling == "point";
    const auto& e = cfg.model.emitter;
    const auto par0 = cfg.mzi_parallel.value_or(cfg.model.mzi);
    std::map<std::string, double> fixed{{"t1", e.t1_ns}, {"f", e.f_overlap}};
    for (const auto& name : free) fixed.erase(name);
    parse_fix(a.fix,
              {{"t1", e.t1_ns}, {"r", e.r_cw_per_ns}, {"tau_e", e.tau_e_ns},
               {"tau_c_prime", e.tau_c_prime_ns}, {"f", e.f_overlap},
               {"t_bs1", cfg.model.mzi.t_bs1}, {"t_bs2", cfg.model.mzi.t_bs2},
               {"t_bs1_par", par0.t_bs1}, {"t_bs2_par", par0.t_bs2}},
              fixed);
    const auto r = fitting::joint_hom_fit(data, fixed, free);

    const auto fm = fitted_from_params(r.params, cfg);
    const hom::HomModel model(fm.emitter, fm.perp, fm.parallel, data.excitation);
    const bool point = data.point_samples;
    auto [perp, par] = hom_curves(model, data.g_perp, data.detector, point);
    for (auto& v : perp.values) v *= r.params.at("amp_perp");
    for (auto& v : par.values) v *= r.params.at("amp_par");
    std::string curves;
    if (data.g2.size() > 0) {
      auto g2 = g2_curve(model, data.g2, data.detector, point);
      for (auto& v : g2.values) v *= r.params.at("amp_g2");
      curves = curves_to_string("tau_ns", {"g2", "g_perp", "g_parallel"}, {&g2, &perp, &par});
    } else {
      curves = curves_to_string("tau_ns", {"g_perp", "g_parallel"}, {&perp, &par});
    }
    write_fit_outputs(a, r, out, curves);
    return;
  }

  if (!a.data) throw std::invalid_argument("fit " + a.kind + " requires --data");
  if (a.kind == "lifetime") {
    const auto decay = read_curve_csv(*a.data, "counts", CurveKind::g2);
    const auto r = fitting::fit_lifetime(decay);
    EmitterModel e;
    e.t1_ns = r.params.at("t1");
    e.tau_e_ns = r.params.at("tau_e");
    auto m = hom::sample_model([&](double t) { return dynamics::pulsed_emission_profile(e, t); },
                               decay, DetectorModel{});
    for (auto& v : m.values) v = r.params.at("amplitude") * v + r.params.at("background");
    write_fit_outputs(a, r, out, curves_to_string("t_ns", {"counts"}, {&m}));
    return;
  }
  if (a.kind == "fringe") {
    std::ifstream in(*a.data);
    if (!in) throw std::runtime_error("cannot open data file: " + *a.data);
    std::string line;
    std::getline(in, line);
    std::vector<fitting::FringePoint> points;
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      const auto cells = split_csv_line(line);
      const std::string where = *a.data + ":" + std::to_string(line_no);
      if (cells.size() < 2) throw std::invalid_argument(where + ": expected delay_ns,visibility");
      fitting::FringePoint p;
      p.delay_ns = require_number(cells[0], where);
      p.visibility = require_number(cells[1], where);
      if (cells.size() > 2 && !cells[2].empty()) p.sigma = require_number(cells[2], where);
      points.push_back(p);
    }
    fitting::FringeFitOptions opt;
    opt.fit_splitting = free.contains("omega_s");
    std::map<std::string, double> fixed;
    parse_fix(a.fix, {{"omega_s", cfg.coherence.omega_s_rad_per_ns}}, fixed);
    if (auto it = fixed.find("omega_s"); it != fixed.end()) {
      if (opt.fit_splitting) throw std::invalid_argument("parameter both free and fixed: omega_s");
      opt.omega_s = it->second;
    } else if (cfg.coherence.omega_s_rad_per_ns > 0.0) {
      opt.omega_s = cfg.coherence.omega_s_rad_per_ns;
    }
    for (const auto& name : free) {
      if (name != "t2" && name != "t_g" && name != "omega_s") {
        throw std::invalid_argument("unknown fit parameter: " + name);
      }
    }
    const auto r = fitting::fit_fringe(points, opt);
    CoherenceModel coh{r.params.at("t2"), r.params.at("t_g"),
                       r.params.contains("omega_s") ? r.params.at("omega_s") : 0.0};
    std::string curves = "delay_ns,visibility\n";
    for (const auto& p : points) {
      curves += format_double(p.delay_ns) + "," + format_double(coherence::g1_fringe(coh, p.delay_ns)) + "\n";
    }
    write_fit_outputs(a, r, out, curves);
    return;
  }
  if (a.kind == "spectrum") {
    const auto spectrum = read_curve_csv(*a.data, "counts", CurveKind::spectrum);
    fitting::SpectrumFitOptions opt;
    opt.doublet = a.doublet || free.contains("splitting");
    const auto r = fitting::fit_spectrum(spectrum, cfg.etalon, opt);
    coherence::LineShape s;
    s.delta_l_ghz = r.params.at("delta_l");
    s.delta_g_ghz = r.params.at("delta_g");
    s.center_ghz = r.params.at("center");
    if (opt.doublet) s.splitting_ghz = r.params.at("splitting");
    auto m = coherence::etalon_convolve(coherence::spectrum_model(s, spectrum.delays), cfg.etalon);
    for (auto& v : m.values) v *= r.params.at("amplitude");
    write_fit_outputs(a, r, out, curves_to_string("detuning_ghz", {"counts"}, {&m}));
    return;
  }
  throw std::invalid_argument("unknown fit kind: " + a.kind);
}

// ----------------------------------------------------------- visibility

struct VisibilityArgs {
  std::optional<std::string> config, perp, par, fit, correct;
  std::optional<double> bin, span;
};

void cmd_visibility(const VisibilityArgs& a, std::ostream& out) {
  const CliConfig cfg = load_cli_config(a.config);
  if (!a.perp || !a.par) throw std::invalid_argument("visibility requires --perp and --par");
  ExcitationConfig exc = cfg.model.excitation;
  exc.mode = ExcitationMode::pulsed;
  const double bin = pick(a.bin, cfg.bin_ns, 0.2);
  const double span = pick(a.span, cfg.span_ns, 40.0);
  const auto perp = load_histogram(*a.perp, "g_perp", CurveKind::g2_perp, bin, span);
  const auto par = load_histogram(*a.par, "g_parallel", CurveKind::g2_parallel, bin, span);

  hom::VisibilityCorrections corr;
  if (a.correct) {
    for (const auto& c : split_list(*a.correct)) {
      if (c == "side-peaks") {
        corr.side_peak_removal = true;
      } else if (c == "rebalance") {
        corr.rebalance_to_5050 = true;
      } else {
        throw std::invalid_argument("unknown correction: " + c + " (expected side-peaks, rebalance)");
      }
    }
  }
  std::optional<hom::FittedHomModel> fitted;
  if (a.fit) {
    fitted = fitted_from_params(read_report_params(*a.fit), cfg);
  } else if (cfg.has_tau_c_prime) {
    fitted = fitted_from_params({}, cfg);
  }
  const bool any = corr.side_peak_removal || corr.rebalance_to_5050;
  if (any && !fitted) {
    throw std::invalid_argument("missing fit parameters: corrections need --fit REPORT or a config with emitter.tau_c_prime_ns");
  }
  const auto raw = hom::integrated_visibility(perp, par, exc, {}, std::nullopt);
  std::string s;
  s += summary_line("window_ns", format_double(-0.5 * exc.pulse_period_ns) + "," +
                                     format_double(0.5 * exc.pulse_period_ns));
  s += summary_line("raw", raw.value);
  s += summary_line("raw.perp_integral", raw.perp_integral);
  s += summary_line("raw.parallel_integral", raw.parallel_integral);
  if (any) {
    const auto c = hom::integrated_visibility(perp, par, exc, corr, fitted);
    std::string applied;
    for (const auto& x : c.applied) applied += (applied.empty() ? "" : ",") + x;
    s += summary_line("corrected", c.value);
    s += summary_line("corrected.perp_integral", c.perp_integral);
    s += summary_line("corrected.parallel_integral", c.parallel_integral);
    s += summary_line("corrections", applied);
  } else {
    s += summary_line("corrections", "none");
  }
  out << s;
}

// --------------------------------------------------------------- budget

struct BudgetArgs {
  std::optional<double> cps, rep, throughput, det;
  std::optional<std::string> losses;
};

void cmd_budget(const BudgetArgs& a, std::ostream& out, std::ostream& err) {
  BudgetInput in = measured_budget_input();
  if (a.cps) in.measured_cps = *a.cps;
  if (a.rep) in.rep_rate_hz = *a.rep;
  if (a.throughput) in.throughput = *a.throughput;
  if (a.det) in.detector_eff = *a.det;
  if (a.losses) {
    in.losses.clear();
    int i = 0;
    for (const auto& item : split_list(*a.losses)) {
      const auto eq = item.find('=');
      LossFactor f;
      f.name = eq == std::string::npos ? "loss" + std::to_string(i) : item.substr(0, eq);
      f.transmission = require_number(eq == std::string::npos ? item : item.substr(eq + 1), "--losses");
      in.losses.push_back(f);
      ++i;
    }
  }
  const Budget b = efficiency_budget(in);
  std::string s;
  s += summary_line("first_lens_cps", b.first_lens_cps);
  s += summary_line("eta_s", b.eta_s);
  s += summary_line("eta_c", b.eta_c);
  for (std::size_t i = 0; i < b.warnings.size(); ++i) {
    s += summary_line("warning." + std::to_string(i), b.warnings[i]);
    err << "warning: " << b.warnings[i] << "\n";
  }
  out << s;
}

// --------------------------------------------------------------- report

struct ReportFile {
  std::string name;
  std::string text;
};

std::vector<ReportFile> report_fig3(std::string& s) {
  const ModelConfig m = fig3_model();
  const ExcitationConfig cw;
  const hom::HomModel model(m.emitter, m.mzi, cw);
  const auto grid = make_symmetric_curve(30.0, 0.01, CurveKind::g2);
  const auto g2 = g2_curve(model, grid, no_jitter(m.detector), true);
  const auto [perp, par] = hom_curves(model, grid, no_jitter(m.detector), true);
  const auto g2i = g2_curve(model, grid, m.detector, true);
  const auto [perpi, pari] = hom_curves(model, grid, m.detector, true);
  const auto v = visibility_column(perp, par);
  const auto vi = visibility_column(perpi, pari);
  const std::size_t mid = grid.size() / 2;

  InterferometerModel even = m.mzi;
  even.set_bs1(0.5);
  even.set_bs2(0.5);
  const auto p0 = hom::cw_hom_pair(m.emitter, even, 0.0);
  const auto pd = hom::cw_hom_pair(m.emitter, even, m.mzi.delay_p_ns);

  auto hwp = make_curve(-90.0, 2.5, 73, CurveKind::g2);
  for (std::size_t i = 0; i < hwp.size(); ++i) {
    hwp.values[i] = hom::hwp_visibility(m.emitter, m.mzi, m.detector, hwp.delays[i]);
  }
  s += summary_line("figure", "fig3");
  s += summary_line("params", "t1_ns=1.75 r_cw_per_ns=0.1 delay_p_ns=22.9 t_bs1=0.25 t_bs2=0.48 tau_c_prime_ns=0.55 f=1 irf_fwhm_ps=100");
  s += summary_line("v0.pre_irf", v.values[mid]);
  s += summary_line("v0.irf", vi.values[mid]);
  s += summary_line("v0.reference", 0.85);
  s += summary_line("g_perp0.irf", perpi.values[mid]);
  s += summary_line("g_parallel0.irf", pari.values[mid]);
  s += summary_line("g_perp0.5050", p0.perp);
  s += summary_line("g_parallel0.5050", p0.parallel);
  s += summary_line("g_perp_at_delay.5050", pd.perp);
  s += summary_line("hwp.v_0deg", hom::hwp_visibility(m.emitter, m.mzi, m.detector, 0.0));
  s += summary_line("hwp.v_22.5deg", hom::hwp_visibility(m.emitter, m.mzi, m.detector, 22.5));
  s += summary_line("hwp.v_45deg", hom::hwp_visibility(m.emitter, m.mzi, m.detector, 45.0));
  s += summary_line("hwp.reference_max", 0.9);
  return {{"fig3_curves.csv",
           curves_to_string("tau_ns",
                            {"g2", "g_perp", "g_parallel", "visibility", "g2_irf", "g_perp_irf",
                             "g_parallel_irf", "visibility_irf"},
                            {&g2, &perp, &par, &v, &g2i, &perpi, &pari, &vi})},
          {"fig3_hwp.csv", curves_to_string("phi_deg", {"visibility"}, {&hwp})}};
}

std::vector<ReportFile> report_fig5(std::string& s) {
  std::vector<ReportFile> files;
  s += summary_line("figure", "fig5");
  s += summary_line("params", "t1_ns=1.75 period_ns=12.5 delay_p_ns=12.5 tau_c_prime_ns=0.95 perp t_bs1=0.27 t_bs2=0.35 parallel t_bs1=0.31 t_bs2=0.5 irf_fwhm_ps=100");
  for (const auto& [label, tau_e] : {std::pair{"calibrated", 1.5}, std::pair{"synthetic", 0.1}}) {
    const ModelConfig m = fig5_model(tau_e);
    const hom::HomModel model(m.emitter, m.mzi, fig5_parallel_mzi(), m.excitation);
    const auto grid = make_symmetric_curve(40.0, 0.05, CurveKind::g2);
    const auto g2 = g2_curve(model, grid, m.detector, true);
    const auto [perp, par] = hom_curves(model, grid, m.detector, true);
    const auto v = visibility_column(perp, par);
    const std::size_t mid = grid.size() / 2;
    const std::string key = std::string("quasi_resonant.") + label;
    s += summary_line(key + ".tau_e_ns", tau_e);
    s += summary_line(key + ".g_perp0", perp.values[mid]);
    s += summary_line(key + ".g_parallel0", par.values[mid]);
    s += summary_line(key + ".v0", v.values[mid]);
    files.push_back({std::string("fig5_") + label + ".csv",
                     curves_to_string("tau_ns", {"g2", "g_perp", "g_parallel", "visibility"},
                                      {&g2, &perp, &par, &v})});
  }
  return files;
}

std::vector<ReportFile> report_fig6(std::string& s) {
  s += summary_line("figure", "fig6");
  s += summary_line("params", "t1_ns=1.75 period_ns=12.5 delay_p_ns=12.5 perp t_bs1=0.27 t_bs2=0.35 parallel t_bs1=0.31 t_bs2=0.5 irf_fwhm_ps=100 window=[-T/2,T/2]");
  s += summary_line("note", "tau_e is not published; calibrated values reproduce the reference visibilities, synthetic defaults are the round-trip test values");
  struct Row {
    const char* key;
    double tc;
    double tau_e;
    double reference_raw;
    double reference_corrected;
  };
  const Row rows[] = {{"quasi_resonant.calibrated", 0.95, 1.5, 0.171, 0.192},
                      {"quasi_resonant.synthetic", 0.95, 0.1, 0.171, 0.192},
                      {"above_band.calibrated", 0.6, 5.0, std::nan(""), 0.092},
                      {"above_band.synthetic", 0.6, 0.3, std::nan(""), 0.092}};
  std::string csv = "dataset,tau_c_prime_ns,tau_e_ns,raw,side_peaks_removed,corrected,reference_raw,reference_corrected\n";
  for (const auto& r : rows) {
    const Fig6Row f = fig6_row(r.key, r.tc, r.tau_e);
    const std::string k = r.key;
    s += summary_line(k + ".tau_c_prime_ns", r.tc);
    s += summary_line(k + ".tau_e_ns", r.tau_e);
    s += summary_line(k + ".raw", f.raw);
    s += summary_line(k + ".side_peaks_removed", f.side_peaks_removed);
    s += summary_line(k + ".corrected", f.corrected);
    if (!std::isnan(r.reference_raw)) {
      s += summary_line(k + ".raw_reference", r.reference_raw);
      s += summary_line(k + ".raw_mismatch_pts", 100.0 * (f.raw - r.reference_raw));
    }
    s += summary_line(k + ".corrected_reference", r.reference_corrected);
    s += summary_line(k + ".corrected_mismatch_pts", 100.0 * (f.corrected - r.reference_corrected));
    csv += k + "," + format_double(r.tc) + "," + format_double(r.tau_e) + "," + format_double(f.raw) +
           "," + format_double(f.side_peaks_removed) + "," + format_double(f.corrected) + "," +
           format_double(r.reference_raw) + "," + format_double(r.reference_corrected) + "\n";
  }
  return {{"fig6_visibility.csv", csv}};
}

std::vector<ReportFile> report_fig7(std::string& s) {
  s += summary_line("figure", "fig7");
  s += summary_line("note", "illustrative coherence parameters T2 and TG; splitting omega_s/pi = 3.1 GHz");
  const double tl = coherence::transform_limit_linewidth(1.75);
  s += summary_line("transform_limit_ghz", tl);
  std::vector<ReportFile> files;
  const CoherenceModel above{1.5, 2.5, 0.0};
  const CoherenceModel quasi{1.5, 2.5, pi * 3.1};
  for (const auto& [label, coh] : {std::pair{"above_band", above}, std::pair{"quasi_resonant", quasi}}) {
    std::vector<fitting::FringePoint> pts;
    std::string csv = "delay_ns,visibility\n";
    for (int i = 0; i <= 48; ++i) {
      const double d = 0.025 * i;
      pts.push_back({d, coherence::g1_fringe(coh, d), 0.01});
      csv += format_double(d) + "," + format_double(pts.back().visibility) + "\n";
    }
    fitting::FringeFitOptions opt;
    opt.fit_splitting = coh.omega_s_rad_per_ns > 0.0;
    const auto r = fitting::fit_fringe(pts, opt);
    const std::string k = label;
    s += summary_line(k + ".t2_ns", r.params.at("t2"));
    s += summary_line(k + ".t_g_ns", r.params.at("t_g"));
    if (opt.fit_splitting) s += summary_line(k + ".splitting_ghz", r.derived.at("splitting_ghz"));
    s += summary_line(k + ".delta_v_ghz", r.derived.at("delta_v_ghz"));
    s += summary_line(k + ".tau_c_ns", r.derived.at("tau_c_ns"));
    s += summary_line(k + ".linewidth_over_transform_limit", r.derived.at("delta_v_ghz") / tl);
    files.push_back({"fig7_" + k + ".csv", csv});
  }
  return files;
}

struct ReportArgs {
  std::string figure;
  std::optional<std::string> out;
};

void cmd_report(const ReportArgs& a, std::ostream& out) {
  std::string s;
  std::vector<ReportFile> files;
  if (a.figure == "fig3") {
    files = report_fig3(s);
  } else if (a.figure == "fig5") {
    files = report_fig5(s);
  } else if (a.figure == "fig6") {
    files = report_fig6(s);
  } else if (a.figure == "fig7") {
    files = report_fig7(s);
  } else {
    throw std::invalid_argument("unknown figure: " + a.figure);
  }
  if (a.out) {
    const std::filesystem::path dir = *a.out;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
    write_text(dir / (a.figure + "_summary.txt"), s);
    for (const auto& f : files) write_text(dir / f.name, f.text);
  }
  out << s;
}

}  // namespace

BudgetInput measured_budget_input() {
  return {0.919e6, 80e6, 0.081, 0.885,
          {{"beta", 0.95}, {"base", 0.5}, {"polarization", 0.5}, {"phonon_sideband", 0.8}}};
}

Budget efficiency_budget(const BudgetInput& in) {
  auto fraction = [](double v, const std::string& name) {
    if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument(name + " must be in (0, 1]");
  };
  fraction(in.throughput, "throughput");
  fraction(in.detector_eff, "detector efficiency");
  if (!(in.rep_rate_hz > 0.0)) throw std::invalid_argument("repetition rate must be > 0");
  if (!(in.measured_cps >= 0.0)) throw std::invalid_argument("measured rate must be >= 0");
  double product = 1.0;
  for (const auto& f : in.losses) {
    fraction(f.transmission, "loss factor " + f.name);
    product *= f.transmission;
  }
  Budget b;
  b.first_lens_cps = in.measured_cps / (in.throughput * in.detector_eff);
  b.eta_s = b.first_lens_cps / in.rep_rate_hz;
  b.eta_c = b.eta_s / product;
  if (b.eta_c > 1.0) b.warnings.emplace_back("budget inconsistent");
  return b;
}

CliConfig take_cli_config(KeyValueFile kv) {
  CliConfig c;
  c.has_tau_c_prime = kv.contains("emitter.tau_c_prime_ns");
  c.model = take_model_config(kv);

  auto take_pair = [&](const char* t_key, const char* r_key, double& t, double& r) {
    const auto tv = kv.take_double(t_key);
    const auto rv = kv.take_double(r_key);
    if (tv) t = *tv, r = 1.0 - *tv;
    if (rv) r = *rv;
    if (rv && !tv) t = 1.0 - *rv;
    return tv || rv;
  };
  InterferometerModel p = c.model.mzi;
  const bool par1 = take_pair("mzi_par.t_bs1", "mzi_par.r_bs1", p.t_bs1, p.r_bs1);
  const bool par2 = take_pair("mzi_par.t_bs2", "mzi_par.r_bs2", p.t_bs2, p.r_bs2);
  if (par1 || par2) {
    require_valid(validate(p), "mzi_par");
    c.mzi_parallel = p;
  }

  if (auto v = kv.take_double("coherence.t2_ns")) c.coherence.t2_ns = *v;
  if (auto v = kv.take_double("coherence.t_g_ns")) c.coherence.t_g_ns = *v;
  if (auto v = kv.take_double("coherence.omega_s_rad_per_ns")) c.coherence.omega_s_rad_per_ns = *v;
  if (auto v = kv.take_double("coherence.splitting_ghz")) c.coherence.omega_s_rad_per_ns = pi * *v;
  require_valid(validate(c.coherence), "coherence");
  if (auto v = kv.take_double("etalon.bandwidth_ghz")) c.etalon.bandwidth_ghz = *v;
  if (auto v = kv.take_double("etalon.fsr_ghz")) c.etalon.fsr_ghz = *v;

  c.bin_ns = kv.take_double("grid.bin_ns");
  c.span_ns = kv.take_double("grid.span_ns");

  auto& s = c.sim;
  s.emitter = c.model.emitter;
  s.mzi = c.model.mzi;
  s.detector = c.model.detector;
  s.excitation = c.model.excitation;
  if (auto v = kv.take_double("sim.duration_ns")) s.duration_ns = *v;
  if (auto v = kv.take_double("sim.pulses")) s.pulses = static_cast<std::int64_t>(*v);
  if (auto v = kv.take("sim.seed")) {
    std::uint64_t seed = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), seed);
    if (ec != std::errc{} || p != v->data() + v->size()) {
      throw std::invalid_argument("key sim.seed: not an unsigned integer: '" + *v + "'");
    }
    s.seed = seed;
  }
  if (auto v = kv.take("sim.polarization")) {
    if (*v == "co") {
      s.polarization = mc::Polarization::co;
    } else if (*v == "cross") {
      s.polarization = mc::Polarization::cross;
    } else {
      throw std::invalid_argument("sim.polarization must be 'co' or 'cross', got '" + *v + "'");
    }
  }
  if (auto v = kv.take("sim.layout")) {
    if (*v == "hom") {
      s.layout = mc::Layout::hom;
    } else if (*v == "hbt") {
      s.layout = mc::Layout::hbt;
    } else {
      throw std::invalid_argument("sim.layout must be 'hom' or 'hbt', got '" + *v + "'");
    }
  }
  if (auto v = kv.take_double("sim.occupancy")) s.occupancy = *v;
  if (auto v = kv.take_double("sim.shards")) s.shards = static_cast<int>(*v);

  reject_leftover_keys(kv);
  return c;
}

CliConfig load_cli_config(const std::optional<std::filesystem::path>& path) {
  return take_cli_config(path ? KeyValueFile::load(*path) : KeyValueFile{});
}

void write_curves_csv(std::ostream& out, const std::string& x_name,
                      const std::vector<std::string>& names,
                      const std::vector<const CorrelationCurve*>& curves) {
  if (names.size() != curves.size() || curves.empty()) {
    throw std::invalid_argument("write_curves_csv needs one name per curve");
  }
  out << x_name;
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  const auto& grid = *curves.front();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << format_double(grid.delays[i]);
    for (const auto* c : curves) out << ',' << format_double(c->values.at(i));
    out << '\n';
  }
}

CorrelationCurve read_curve_csv(const std::filesystem::path& path, const std::string& preferred,
                                CurveKind kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open curve file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2) throw std::runtime_error(path.string() + ": expected at least two columns");
  std::size_t col = 1;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] == preferred) col = i;
  }
  CorrelationCurve c;
  c.kind = kind;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() <= col) throw std::runtime_error(where + ": missing column");
    c.delays.push_back(require_number(cells[0], where));
    c.values.push_back(require_number(cells[col], where));
  }
  if (c.delays.size() >= 2) c.bin_width = c.delays[1] - c.delays[0];
  const auto report = validate(c);
  if (!report.empty()) require_valid(report, path.string());
  return c;
}

Histogram load_histogram(const std::filesystem::path& path, const std::string& preferred,
                         CurveKind kind, double bin_ns, double span_ns) {
  if (!is_timestamp_file(path)) return read_curve_csv(path, preferred, kind);
  const auto streams = path.extension() == ".phts" ? mc::read_timestamps(path)
                                                   : mc::read_timestamps_csv(path);
  auto h = mc::histogram_coincidences(streams.start, streams.stop, bin_ns, span_ns);
  h.kind = kind;
  return h;
}

ModelConfig fig3_model() {
  ModelConfig m;
  m.emitter.t1_ns = 1.75;
  m.emitter.r_cw_per_ns = 0.1;
  m.emitter.tau_c_prime_ns = 0.55;
  m.emitter.f_overlap = 1.0;
  m.mzi.delay_p_ns = 22.9;
  m.mzi.set_bs1(0.25);
  m.mzi.set_bs2(0.48);
  m.detector.jitter_fwhm_ps = 100.0;
  return m;
}

ModelConfig fig5_model(double tau_e_ns) {
  ModelConfig m;
  m.emitter.t1_ns = 1.75;
  m.emitter.tau_e_ns = tau_e_ns;
  m.emitter.tau_c_prime_ns = 0.95;
  m.excitation.mode = ExcitationMode::pulsed;
  m.excitation.pulse_period_ns = kRepetitionPeriodNs;
  m.mzi.delay_p_ns = kRepetitionPeriodNs;
  m.mzi.set_bs1(0.27);
  m.mzi.set_bs2(0.35);
  m.detector.jitter_fwhm_ps = 100.0;
  return m;
}

InterferometerModel fig5_parallel_mzi() {
  InterferometerModel p;
  p.delay_p_ns = kRepetitionPeriodNs;
  p.set_bs1(0.31);
  p.set_bs2(0.5);
  return p;
}

Fig6Row fig6_row(const std::string& name, double tau_c_prime_ns, double tau_e_ns) {
  ModelConfig m = fig5_model(tau_e_ns);
  m.emitter.tau_c_prime_ns = tau_c_prime_ns;
  const auto par_mzi = fig5_parallel_mzi();
  const hom::HomModel model(m.emitter, m.mzi, par_mzi, m.excitation);
  const auto grid = make_symmetric_curve(30.0, 0.05, CurveKind::g2);
  const auto [perp, par] = hom::sample_hom(model, grid, m.detector);
  const hom::FittedHomModel fitted{m.emitter, m.mzi, par_mzi, m.detector};
  Fig6Row r;
  r.name = name;
  r.tau_c_prime_ns = tau_c_prime_ns;
  r.tau_e_ns = tau_e_ns;
  r.raw = hom::integrated_visibility(perp, par, m.excitation, {}, std::nullopt).value;
  r.side_peaks_removed = hom::integrated_visibility(perp, par, m.excitation, {true, false}, fitted).value;
  r.corrected = hom::integrated_visibility(perp, par, m.excitation, {true, true}, fitted).value;
  return r;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hong-Ou-Mandel modelling, simulation and fitting toolkit", "hombench"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ModelArgs ma;
  auto* model = app.add_subcommand("model", "Evaluate an analytic model on a grid (CSV)");
  model->add_option("kind", ma.kind, "Model kind")
      ->required()
      ->check(CLI::IsMember({"cw-g2", "pulsed-g2", "cw-hom", "pulsed-hom", "g1", "spectrum"}));
  model->add_option("--config", ma.config, "Configuration file");
  model->add_option("--out", ma.out, "Output CSV (default: standard output)");
  model->add_option("--bin-ns", ma.bin, "Grid step (GHz for spectrum)");
  model->add_option("--span-ns", ma.span, "Grid half-width (delay range for g1, GHz for spectrum)");
  model->add_flag("--irf", ma.irf, "Convolve with the detector response");
  model->add_option("--sampling", ma.sampling, "point: values at bin centres; bin: bin averages")
      ->check(CLI::IsMember({"point", "bin"}));

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo timestamp streams");
  simulate->add_option("--config", sa.config, "Configuration file");
  simulate->add_option("--out", sa.out, "Timestamp file (.phts binary or .csv)")->required();
  simulate->add_option("--seed", sa.seed, "Random seed");
  simulate->add_option("--threads", sa.threads, "Worker threads (default HOMBENCH_THREADS)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--duration-ns", sa.duration, "CW duration");
  simulate->add_option("--pulses", sa.pulses, "Pulse count");

  HistogramArgs ha;
  auto* histogram = app.add_subcommand("histogram", "Start-stop coincidence histogram (CSV)");
  histogram->add_option("input", ha.input, "Timestamp file")->required();
  histogram->add_option("--config", ha.config, "Configuration file");
  histogram->add_option("--out", ha.out, "Output CSV");
  histogram->add_option("--bin-ns", ha.bin, "Bin width");
  histogram->add_option("--span-ns", ha.span, "Delay half-range");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Least-squares fits");
  fit->add_option("kind", fa.kind, "Fit kind")
      ->required()
      ->check(CLI::IsMember({"hom", "lifetime", "fringe", "spectrum"}));
  fit->add_option("--config", fa.config, "Configuration file (start and fixed values)");
  fit->add_option("--out", fa.out, "Output prefix (.txt report, .csv parameters, _curves.csv)");
  fit->add_option("--g2", fa.g2, "g2 histogram (hom)");
  fit->add_option("--perp", fa.perp, "Cross-polarised histogram (hom)");
  fit->add_option("--par", fa.par, "Co-polarised histogram (hom)");
  fit->add_option("--data", fa.data, "Data CSV (lifetime, fringe, spectrum)");
  fit->add_option("--bin-ns", fa.bin, "Bin width for timestamp inputs");
  fit->add_option("--span-ns", fa.span, "Delay half-range for timestamp inputs");
  fit->add_option("--free", fa.free, "Comma-separated free parameters");
  fit->add_option("--fix", fa.fix, "Comma-separated fixed parameters (name or name=value)");
  fit->add_flag("--irf", fa.irf, "Convolve model curves with the detector response");
  fit->add_flag("--doublet", fa.doublet, "Fit a doublet spectrum");
  fit->add_option("--sampling", fa.sampling, "bin: histogram bin averages; point: bin-centre values")
      ->check(CLI::IsMember({"point", "bin"}));

  VisibilityArgs va;
  auto* vis = app.add_subcommand("visibility", "Integrated two-photon visibility");
  vis->add_option("--config", va.config, "Configuration file");
  vis->add_option("--perp", va.perp, "Cross-polarised histogram");
  vis->add_option("--par", va.par, "Co-polarised histogram");
  vis->add_option("--fit", va.fit, "Fit report with the fitted parameters");
  vis->add_option("--correct", va.correct, "Corrections: side-peaks,rebalance");
  vis->add_option("--bin-ns", va.bin, "Bin width for timestamp inputs");
  vis->add_option("--span-ns", va.span, "Delay half-range for timestamp inputs");

  BudgetArgs ba;
  auto* budget = app.add_subcommand("budget", "Source efficiency budget");
  budget->add_option("--measured-cps", ba.cps, "Detected count rate");
  budget->add_option("--rep-rate-hz", ba.rep, "Repetition rate");
  budget->add_option("--throughput", ba.throughput, "Optical throughput");
  budget->add_option("--detector-eff", ba.det, "Detector efficiency");
  budget->add_option("--losses", ba.losses, "Loss factors as transmissions (name=value,...)");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Reproduction bundle for a reference figure");
  report->add_option("figure", ra.figure, "Figure")
      ->required()
      ->check(CLI::IsMember({"fig3", "fig5", "fig6", "fig7"}));
  report->add_option("--out", ra.out, "Output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n";
    return e.get_exit_code();
  }

  try {
    if (*model) {
      cmd_model(ma, out);
    } else if (*simulate) {
      cmd_simulate(sa, out);
    } else if (*histogram) {
      cmd_histogram(ha, out);
    } else if (*fit) {
      cmd_fit(fa, out);
    } else if (*vis) {
      cmd_visibility(va, out);
    } else if (*budget) {
      cmd_budget(ba, out, err);
    } else if (*report) {
      cmd_report(ra, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace hombench::cli
