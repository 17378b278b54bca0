#include "hombench/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "hombench/dynamics.hpp"
#include "hombench/hom.hpp"

namespace hombench::mc {
namespace {

constexpr double kPhotonsPerShard = 2e6;
constexpr double kLatencySigmas = 8.0;
constexpr double kInteractionLifetimes = 10.0;

// Pair modifier of the different-port probability, with cached g2 for the
// pulsed case.
class Coalescer {
 public:
  explicit Coalescer(const SimConfig& config)
      : f_eff_(hom::effective_overlap(config.emitter.f_overlap, config.mzi.hwp_deg)),
        tau_c_(config.emitter.tau_c_prime_ns),
        delay_(config.mzi.delay_p_ns) {
    active_ = config.polarization == Polarization::co && f_eff_ > 0.0;
    if (config.excitation.mode == ExcitationMode::pulsed) {
      pulsed_.emplace(config.emitter, config.excitation);
      tail_ = (*pulsed_)(delay_);
    }
  }

  bool active() const { return active_; }

  double operator()(double bs2_gap, double emission_gap) const {
    if (!active_) return 1.0;
    double dip = f_eff_ * std::exp(-2.0 * std::abs(bs2_gap) / tau_c_);
    if (pulsed_) {
      const double g = (*pulsed_)(emission_gap);
      dip = g > 0.0 ? dip * tail_ / g : 1.0;
    }
    return std::clamp(1.0 - dip, 0.0, 1.0);
  }

 private:
  double f_eff_;
  double tau_c_;
  double delay_;
  bool active_ = false;
  std::optional<dynamics::PulsedCorrelation> pulsed_;
  double tail_ = 1.0;
};

double per_detector_sigma(const DetectorModel& d) {
  return hom::fwhm_to_sigma(d.jitter_fwhm_ns()) / std::sqrt(2.0);
}

void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t to_ps(double t_ns) {
  if (!(t_ns >= 0.0)) throw std::invalid_argument("negative timestamp cannot be stored");
  return static_cast<std::uint64_t>(std::llround(t_ns * 1000.0));
}

struct Record {
  std::uint64_t ps;
  std::uint8_t channel;
  bool operator<(const Record& o) const { return ps != o.ps ? ps < o.ps : channel < o.channel; }
};

std::vector<Record> merge_records(const DetectorStreams& s) {
  std::vector<Record> r;
  r.reserve(s.start.size() + s.stop.size());
  for (double t : s.start) r.push_back({to_ps(t), 0});
  for (double t : s.stop) r.push_back({to_ps(t), 1});
  std::sort(r.begin(), r.end());
  return r;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t shard, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(shard), static_cast<std::uint32_t>(shard >> 32),
                    static_cast<std::uint32_t>(stream)};
  engine_.seed(seq);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

double Rng::exponential(double rate) { return -std::log(uniform_open()) / rate; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(uniform_open()));
  const double phi = 2.0 * 3.14159265358979323846 * uniform();
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

ValidationReport validate(const SimConfig& c) {
  ValidationReport r = hombench::validate(c.emitter);
  for (auto& v : hombench::validate(c.mzi)) r.push_back(std::move(v));
  for (auto& v : hombench::validate(c.detector)) r.push_back(std::move(v));
  for (auto& v : hombench::validate(c.excitation)) r.push_back(std::move(v));
  if (c.excitation.mode == ExcitationMode::cw) {
    if (!(std::isfinite(c.duration_ns) && c.duration_ns > 0.0)) r.emplace_back("duration > 0");
  } else if (!(c.pulses > 0)) {
    r.emplace_back("pulses > 0");
  }
  if (!(c.occupancy >= 0.0 && c.occupancy <= 1.0)) r.emplace_back("0 <= occupancy <= 1");
  if (c.shards < 0) r.emplace_back("shards >= 0");
  return r;
}

int shard_count(const SimConfig& c) {
  if (c.shards > 0) return c.shards;
  double expected = 0.0;
  if (c.excitation.mode == ExcitationMode::cw) {
    if (c.emitter.r_cw_per_ns > 0.0) {
      expected = c.duration_ns / (1.0 / c.emitter.r_cw_per_ns + c.emitter.t1_ns);
    }
  } else {
    expected = static_cast<double>(c.pulses) * c.occupancy;
  }
  return std::max(1, static_cast<int>(std::ceil(expected / kPhotonsPerShard)));
}

std::vector<PhotonEvent> simulate_emission(const SimConfig& config) {
  return simulate_emission(config, 0, 1);
}

std::vector<PhotonEvent> simulate_emission(const SimConfig& config, int shard, int shards) {
  require_valid(validate(config), "simulation config");
  if (shards < 1 || shard < 0 || shard >= shards) throw std::invalid_argument("invalid shard index");
  Rng rng(config.seed, static_cast<std::uint64_t>(shard), 0);
  std::vector<PhotonEvent> events;
  const auto& em = config.emitter;

  if (config.excitation.mode == ExcitationMode::cw) {
    const double t0 = config.duration_ns * shard / shards;
    const double t1 = config.duration_ns * (shard + 1) / shards;
    const double r = em.r_cw_per_ns;
    const double decay = 1.0 / em.t1_ns;
    events.reserve(static_cast<std::size_t>(r > 0.0 ? (t1 - t0) / (1.0 / r + em.t1_ns) * 1.05 + 16 : 16));
    // Stationary start: excited with probability R T1/(1 + R T1).
    bool excited = rng.uniform() < r * em.t1_ns / (1.0 + r * em.t1_ns);
    double t = t0;
    while (true) {
      if (!excited) {
        if (r <= 0.0) break;
        t += rng.exponential(r);
      }
      t += rng.exponential(decay);
      excited = false;
      if (t >= t1) break;
      PhotonEvent e;
      e.emission_time = t;
      events.push_back(e);
    }
    return events;
  }

  const double period = config.excitation.pulse_period_ns;
  const std::int64_t p0 = config.pulses * shard / shards;
  const std::int64_t p1 = config.pulses * (shard + 1) / shards;
  const double a = 1.0 / em.t1_ns;
  const double b = em.tau_e_ns > 0.0 ? a + 1.0 / em.tau_e_ns : 0.0;
  events.reserve(static_cast<std::size_t>(static_cast<double>(p1 - p0) * config.occupancy) + 16);
  for (std::int64_t k = p0; k < p1; ++k) {
    if (config.occupancy < 1.0 && !rng.bernoulli(config.occupancy)) continue;
    // Density proportional to exp(-a t) - exp(-b t) is Exp(a) + Exp(b).
    double offset = rng.exponential(a);
    if (b > 0.0) offset += rng.exponential(b);
    PhotonEvent e;
    e.emission_time = static_cast<double>(k) * period + offset;
    e.pulse_index = k;
    events.push_back(e);
  }
  std::stable_sort(events.begin(), events.end(), [](const PhotonEvent& x, const PhotonEvent& y) {
    return x.emission_time < y.emission_time;
  });
  return events;
}

double coalescence_factor(const SimConfig& config, double bs2_gap, double emission_gap) {
  return Coalescer(config)(bs2_gap, emission_gap);
}

DetectorStreams propagate_and_detect(std::vector<PhotonEvent>& events, const SimConfig& config,
                                     Rng& rng) {
  const auto& mzi = config.mzi;
  const double sigma = per_detector_sigma(config.detector);
  const double latency = kLatencySigmas * sigma;

  if (config.layout == Layout::hbt) {
    for (auto& e : events) {
      e.arm = Arm::none;
      e.bs2_time = e.emission_time;
      e.output_port = rng.bernoulli(mzi.t_bs1) ? Port::start : Port::stop;
    }
  } else {
    for (auto& e : events) {
      e.arm = rng.bernoulli(mzi.t_bs1) ? Arm::long_arm : Arm::short_arm;
      e.bs2_time = e.emission_time + (e.arm == Arm::long_arm ? mzi.delay_p_ns : 0.0);
    }
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return events[x].bs2_time < events[y].bs2_time;
    });

    const Coalescer coalesce(config);
    const double window =
        kInteractionLifetimes * std::max(config.emitter.tau_c_prime_ns, config.emitter.t1_ns);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      PhotonEvent& pj = events[order[pos]];
      // Long-arm photons exit at "stop" with probability T2, short-arm at "start".
      const double b = pj.arm == Arm::long_arm ? mzi.r_bs2 : mzi.t_bs2;
      double p_start = b;
      if (coalesce.active() && b > 0.0 && b < 1.0) {
        double w_start = 1.0, w_stop = 1.0;
        for (std::size_t k = pos; k-- > 0;) {
          const PhotonEvent& pi = events[order[k]];
          const double gap = pj.bs2_time - pi.bs2_time;
          if (gap >= window) break;
          if (pi.arm == pj.arm) continue;
          const double c = coalesce(gap, pj.emission_time - pi.emission_time);
          if (c >= 1.0) continue;
          if (pi.output_port == Port::start) {
            w_start *= (1.0 - c * (1.0 - b)) / b;
            w_stop *= c;
          } else {
            w_start *= c;
            w_stop *= (1.0 - c * b) / (1.0 - b);
          }
        }
        const double den = b * w_start + (1.0 - b) * w_stop;
        if (den > 0.0) p_start = b * w_start / den;
      }
      pj.output_port = rng.uniform() < p_start ? Port::start : Port::stop;
    }
  }

  DetectorStreams out;
  for (auto& e : events) {
    const double jitter = sigma > 0.0 ? sigma * rng.normal() : 0.0;
    e.detected_time = std::max(e.emission_time, e.bs2_time + latency + jitter);
    e.detected = config.detector.efficiency >= 1.0 || rng.bernoulli(config.detector.efficiency);
    if (!e.detected) continue;
    (e.output_port == Port::start ? out.start : out.stop).push_back(e.detected_time);
  }
  std::sort(out.start.begin(), out.start.end());
  std::sort(out.stop.begin(), out.stop.end());
  return out;
}

Histogram histogram_coincidences(std::span<const double> start, std::span<const double> stop,
                                 double bin_width_ns, double span_ns) {
  if (!(bin_width_ns > 0.0) || !std::isfinite(bin_width_ns)) {
    throw std::invalid_argument("bin width must be > 0");
  }
  if (!std::is_sorted(start.begin(), start.end()) || !std::is_sorted(stop.begin(), stop.end())) {
    throw std::invalid_argument("streams must be time-sorted");
  }
  Histogram h = make_symmetric_curve(span_ns, bin_width_ns, CurveKind::g2);
  const long long k_max = (static_cast<long long>(h.size()) - 1) / 2;
  const double reach = (static_cast<double>(k_max) + 0.5) * bin_width_ns;
  std::size_t lo = 0;
  for (double s : start) {
    while (lo < stop.size() && stop[lo] < s - reach) ++lo;
    for (std::size_t j = lo; j < stop.size() && stop[j] < s + reach; ++j) {
      const auto k = static_cast<long long>(std::floor((stop[j] - s) / bin_width_ns + 0.5));
      if (k < -k_max || k > k_max) continue;
      h.values[static_cast<std::size_t>(k + k_max)] += 1.0;
    }
  }
  return h;
}

SimResult run_simulation(const SimConfig& config, int threads) {
  require_valid(validate(config), "simulation config");
  const int shards = shard_count(config);
  struct ShardOut {
    DetectorStreams streams;
    std::int64_t emitted = 0;
  };
  std::vector<ShardOut> results(static_cast<std::size_t>(shards));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int s = next++; s < shards; s = next++) {
      auto events = simulate_emission(config, s, shards);
      Rng rng(config.seed, static_cast<std::uint64_t>(s), 1);
      auto& out = results[static_cast<std::size_t>(s)];
      out.emitted = static_cast<std::int64_t>(events.size());
      out.streams = propagate_and_detect(events, config, rng);
    }
  };
  const int n_threads = std::clamp(threads, 1, shards);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SimResult result;
  result.shards = shards;
  result.duration_ns = config.excitation.mode == ExcitationMode::cw
                           ? config.duration_ns
                           : static_cast<double>(config.pulses) * config.excitation.pulse_period_ns;
  for (auto& r : results) {
    result.emitted += r.emitted;
    auto& s = result.streams;
    s.start.insert(s.start.end(), r.streams.start.begin(), r.streams.start.end());
    s.stop.insert(s.stop.end(), r.streams.stop.begin(), r.streams.stop.end());
    r.streams = {};
  }
  // Long-arm delay can push a shard's last photons past the next shard's first.
  std::sort(result.streams.start.begin(), result.streams.start.end());
  std::sort(result.streams.stop.begin(), result.streams.stop.end());
  result.detected = static_cast<std::int64_t>(result.streams.start.size() + result.streams.stop.size());
  return result;
}

void write_timestamps(const std::filesystem::path& path, const DetectorStreams& streams) {
  const auto records = merge_records(streams);
  std::string buf;
  buf.reserve(32 + 16 * records.size());
  buf += "PHTS";
  put_u16(buf, kTimestampVersion);
  buf.append(2, '\0');
  put_u64(buf, records.size());
  buf.append(16, '\0');
  for (const auto& r : records) {
    put_u64(buf, r.ps);
    buf.push_back(static_cast<char>(r.channel));
    buf.append(7, '\0');
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DetectorStreams read_timestamps(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open timestamp file: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 32 || buf.compare(0, 4, "PHTS") != 0) {
    throw std::runtime_error(path.string() + ": not a PHTS timestamp file");
  }
  const auto version = static_cast<std::uint16_t>(p[4] | (p[5] << 8));
  if (version != kTimestampVersion) {
    throw std::runtime_error(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = get_u64(p + 8);
  if (buf.size() != 32 + 16 * count) {
    throw std::runtime_error(path.string() + ": record count does not match file size");
  }
  DetectorStreams s;
  for (std::uint64_t i = 0; i < count; ++i) {
    const unsigned char* rec = p + 32 + 16 * i;
    const double t = static_cast<double>(get_u64(rec)) / 1000.0;
    if (rec[8] == 0) {
      s.start.push_back(t);
    } else if (rec[8] == 1) {
      s.stop.push_back(t);
    } else {
      throw std::runtime_error(path.string() + ": invalid channel in record " + std::to_string(i));
    }
  }
  return s;
}

void write_timestamps_csv(const std::filesystem::path& path, const DetectorStreams& streams) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "time_ps,channel\n";
  for (const auto& r : merge_records(streams)) out << r.ps << ',' << int(r.channel) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DetectorStreams read_timestamps_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open timestamp file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("time_ps,channel", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing header 'time_ps,channel'");
  }
  DetectorStreams s;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::uint64_t ps = 0;
    int channel = -1;
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      ps = std::stoull(line.substr(0, comma));
      channel = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed record");
    }
    if (channel != 0 && channel != 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": invalid channel");
    }
    (channel == 0 ? s.start : s.stop).push_back(static_cast<double>(ps) / 1000.0);
  }
  return s;
}

}  // namespace hombench::mc
