#pragma once

// Event-level Monte-Carlo of emission, interferometer routing, pairwise
// coalescence at the second beamsplitter, detection and coincidence
// histogramming.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "hombench/core.hpp"

namespace hombench::mc {

/// mt19937_64 keyed by (seed, shard, stream) with fixed transforms, so
/// draws are identical across standard libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t shard, std::uint64_t stream = 0);

  std::uint64_t next() { return engine_(); }
  double uniform();       ///< [0, 1)
  double uniform_open();  ///< (0, 1]
  double exponential(double rate);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class Arm : std::uint8_t { none, long_arm, short_arm };
enum class Port : std::uint8_t { none, start, stop };
enum class Polarization { co, cross };
/// hom: detectors behind BS2; hbt: detectors on the BS1 outputs.
enum class Layout { hom, hbt };

struct PhotonEvent {
  double emission_time = 0.0;
  std::int64_t pulse_index = -1;
  Arm arm = Arm::none;
  double bs2_time = 0.0;
  Port output_port = Port::none;
  double detected_time = 0.0;
  bool detected = false;
};

struct SimConfig {
  EmitterModel emitter;
  InterferometerModel mzi;
  DetectorModel detector;
  ExcitationConfig excitation;
  double duration_ns = 0.0;  ///< CW
  std::int64_t pulses = 0;   ///< pulsed
  std::uint64_t seed = 1;
  Polarization polarization = Polarization::co;
  Layout layout = Layout::hom;
  double occupancy = 1.0;  ///< pulsed emission probability per pulse
  int shards = 0;          ///< 0 picks about 2e6 photons per shard
};

ValidationReport validate(const SimConfig& config);

/// Number of shards the run is split into (independent of thread count).
int shard_count(const SimConfig& config);

/// Emission events of one shard in absolute time, sorted by emission time.
/// CW shards start from the stationary state; pulsed shards cover a
/// contiguous block of pulses.
std::vector<PhotonEvent> simulate_emission(const SimConfig& config, int shard, int shards);
std::vector<PhotonEvent> simulate_emission(const SimConfig& config);

struct DetectorStreams {
  std::vector<double> start;  ///< ns, sorted
  std::vector<double> stop;
};

/// Routes photons through the interferometer (or the BS1 outputs for the
/// hbt layout), applies coalescence, jitter and efficiency. Fills arm,
/// port and detection fields of `events`.
DetectorStreams propagate_and_detect(std::vector<PhotonEvent>& events, const SimConfig& config,
                                     Rng& rng);

/// Different-port modifier for a pair of photons from different arms whose
/// BS2 arrivals differ by `bs2_gap` and emissions by `emission_gap`.
double coalescence_factor(const SimConfig& config, double bs2_gap, double emission_gap);

/// Counts every (start, stop) pair with stop - start in the bins centred at
/// k*bin_width, |k| <= round(span/bin_width).
Histogram histogram_coincidences(std::span<const double> start, std::span<const double> stop,
                                 double bin_width_ns, double span_ns);

struct SimResult {
  DetectorStreams streams;
  std::int64_t emitted = 0;
  std::int64_t detected = 0;
  double duration_ns = 0.0;
  int shards = 1;
};

/// Runs all shards on up to `threads` workers and concatenates them in
/// shard order. The output does not depend on `threads`.
SimResult run_simulation(const SimConfig& config, int threads = 1);

/// Binary timestamp file: 32-byte header ("PHTS", u16 version, u64 count),
/// then 16-byte little-endian records (u64 picoseconds, u8 channel).
inline constexpr std::uint16_t kTimestampVersion = 1;

void write_timestamps(const std::filesystem::path& path, const DetectorStreams& streams);
DetectorStreams read_timestamps(const std::filesystem::path& path);
void write_timestamps_csv(const std::filesystem::path& path, const DetectorStreams& streams);
DetectorStreams read_timestamps_csv(const std::filesystem::path& path);

}  // namespace hombench::mc
