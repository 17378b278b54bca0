#pragma once

// Command-line front end: configuration, CSV curve I/O, efficiency budget and
// figure reproduction recipes.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hombench/coherence.hpp"
#include "hombench/config.hpp"
#include "hombench/core.hpp"
#include "hombench/hom.hpp"
#include "hombench/montecarlo.hpp"

namespace hombench::cli {

struct LossFactor {
  std::string name;
  double transmission = 1.0;
};

struct BudgetInput {
  double measured_cps = 0.0;
  double rep_rate_hz = 0.0;
  double throughput = 1.0;
  double detector_eff = 1.0;
  std::vector<LossFactor> losses;
};

struct Budget {
  double first_lens_cps = 0.0;
  double eta_s = 0.0;
  double eta_c = 0.0;
  std::vector<std::string> warnings;
};

/// Measured source-efficiency inputs: 0.919 Mcps at 80 MHz,
/// 8.1% throughput, 88.5% detector efficiency and the four coupling losses.
BudgetInput measured_budget_input();

/// first_lens = cps/(throughput*eff), eta_s = first_lens/rep_rate,
/// eta_c = eta_s / product(losses). Warns "budget inconsistent" if eta_c > 1.
Budget efficiency_budget(const BudgetInput& input);

/// Everything a command may read from a configuration file.
struct CliConfig {
  ModelConfig model;
  std::optional<InterferometerModel> mzi_parallel;
  CoherenceModel coherence;
  coherence::Etalon etalon;
  mc::SimConfig sim;  ///< model fields mirror `model`
  std::optional<double> bin_ns;
  std::optional<double> span_ns;
  bool has_tau_c_prime = false;
};

/// Parses `kv` (model keys plus mzi_par.*, coherence.*, etalon.*, sim.*,
/// grid.*); leftover keys raise "unknown key: ...".
CliConfig take_cli_config(KeyValueFile kv);
CliConfig load_cli_config(const std::optional<std::filesystem::path>& path);

/// CSV with header `x,<names...>`; every curve shares the grid of the first.
void write_curves_csv(std::ostream& out, const std::string& x_name,
                      const std::vector<std::string>& names,
                      const std::vector<const CorrelationCurve*>& curves);
/// Reads a column of a CSV curve (first column is the grid). Picks the
/// column named `preferred` when present, otherwise the second column.
CorrelationCurve read_curve_csv(const std::filesystem::path& path, const std::string& preferred,
                                CurveKind kind);

/// Histogram from a CSV curve or, for `.phts`/timestamp CSV inputs, from the
/// start/stop coincidences with the given binning.
Histogram load_histogram(const std::filesystem::path& path, const std::string& preferred,
                         CurveKind kind, double bin_ns, double span_ns);

/// Integrated visibilities of one fig6 dataset, computed on noiseless model
/// histograms with a 100 ps IRF.
struct Fig6Row {
  std::string name;
  double tau_c_prime_ns = 0.0;
  double tau_e_ns = 0.0;
  double raw = 0.0;
  double side_peaks_removed = 0.0;
  double corrected = 0.0;
};
Fig6Row fig6_row(const std::string& name, double tau_c_prime_ns, double tau_e_ns);

/// fig3 recipe parameters: T1 1.75 ns, R 0.1/ns, delay 22.9 ns, BS1 0.25,
/// BS2 0.48, tau_c' 0.55 ns, 100 ps IRF.
ModelConfig fig3_model();
/// fig5 recipe quasi-resonant parameters (cross-polarised coefficient set).
ModelConfig fig5_model(double tau_e_ns);
InterferometerModel fig5_parallel_mzi();

/// Runs the command line; returns the exit code. Errors are written to
/// `err` as "error: ..." lines.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hombench::cli
