#include "hombench/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hombench {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool has_prefix(std::string_view key, std::string_view prefix) {
  return key.substr(0, prefix.size()) == prefix;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
    }
    if (kv.contains(key)) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": duplicate key: " + std::string(key));
    }
    kv.entries_.emplace(std::string(key), std::string(value));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

bool KeyValueFile::contains(std::string_view key) const {
  return entries_.find(key) != entries_.end();
}

std::optional<std::string> KeyValueFile::get(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void KeyValueFile::set(std::string key, std::string value) {
  entries_[std::move(key)] = std::move(value);
}

std::optional<std::string> KeyValueFile::take(std::string_view key) {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  std::string value = std::move(it->second);
  entries_.erase(it);
  return value;
}

std::optional<double> KeyValueFile::take_double(std::string_view key) {
  auto text = take(key);
  if (!text) return std::nullopt;
  auto value = parse_double(*text);
  if (!value) {
    throw std::invalid_argument("key " + std::string(key) +
                                ": not a number: '" + *text + "'");
  }
  return value;
}

std::string KeyValueFile::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

ModelConfig take_model_config(KeyValueFile& kv, ModelConfig c) {
  auto num = [&kv](std::string_view key, double& field) {
    if (auto v = kv.take_double(key)) field = *v;
  };
  num("emitter.t1_ns", c.emitter.t1_ns);
  num("emitter.tau_e_ns", c.emitter.tau_e_ns);
  num("emitter.r_cw_per_ns", c.emitter.r_cw_per_ns);
  num("emitter.tau_c_prime_ns", c.emitter.tau_c_prime_ns);
  num("emitter.f_overlap", c.emitter.f_overlap);
  if (auto v = kv.take_double("emitter.tau_d_ns")) c.emitter.tau_d_ns = *v;

  num("mzi.delay_p_ns", c.mzi.delay_p_ns);
  // A single coefficient of a pair implies the other.
  const bool t1 = kv.contains("mzi.t_bs1"), r1 = kv.contains("mzi.r_bs1");
  const bool t2 = kv.contains("mzi.t_bs2"), r2 = kv.contains("mzi.r_bs2");
  num("mzi.t_bs1", c.mzi.t_bs1);
  num("mzi.r_bs1", c.mzi.r_bs1);
  num("mzi.t_bs2", c.mzi.t_bs2);
  num("mzi.r_bs2", c.mzi.r_bs2);
  if (t1 && !r1) c.mzi.r_bs1 = 1.0 - c.mzi.t_bs1;
  if (r1 && !t1) c.mzi.t_bs1 = 1.0 - c.mzi.r_bs1;
  if (t2 && !r2) c.mzi.r_bs2 = 1.0 - c.mzi.t_bs2;
  if (r2 && !t2) c.mzi.t_bs2 = 1.0 - c.mzi.r_bs2;
  num("mzi.hwp_deg", c.mzi.hwp_deg);

  num("detector.jitter_fwhm_ps", c.detector.jitter_fwhm_ps);
  num("detector.efficiency", c.detector.efficiency);

  if (auto mode = kv.take("excitation.mode")) {
    if (*mode == "cw") {
      c.excitation.mode = ExcitationMode::cw;
    } else if (*mode == "pulsed") {
      c.excitation.mode = ExcitationMode::pulsed;
    } else {
      throw std::invalid_argument("excitation.mode must be 'cw' or 'pulsed', got '" + *mode + "'");
    }
  }
  num("excitation.pulse_period_ns", c.excitation.pulse_period_ns);
  num("excitation.power_ratio", c.excitation.power_ratio);
  if (auto v = kv.take_double("excitation.reservoir_n0")) c.excitation.reservoir_n0 = *v;
  if (auto v = kv.take_double("excitation.reservoir_td_ns")) c.excitation.reservoir_td_ns = *v;

  std::vector<std::string> unknown;
  for (const auto& [key, value] : kv.entries()) {
    if (has_prefix(key, "emitter.") || has_prefix(key, "mzi.") ||
        has_prefix(key, "detector.") || has_prefix(key, "excitation.")) {
      unknown.push_back(key);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown key: ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw std::invalid_argument(msg);
  }
  return c;
}

void put_model_config(KeyValueFile& kv, const ModelConfig& c) {
  auto put = [&kv](std::string key, double v) { kv.set(std::move(key), format_double(v)); };
  put("emitter.t1_ns", c.emitter.t1_ns);
  put("emitter.tau_e_ns", c.emitter.tau_e_ns);
  put("emitter.r_cw_per_ns", c.emitter.r_cw_per_ns);
  put("emitter.tau_c_prime_ns", c.emitter.tau_c_prime_ns);
  put("emitter.f_overlap", c.emitter.f_overlap);
  if (c.emitter.tau_d_ns) put("emitter.tau_d_ns", *c.emitter.tau_d_ns);
  put("mzi.delay_p_ns", c.mzi.delay_p_ns);
  put("mzi.t_bs1", c.mzi.t_bs1);
  put("mzi.r_bs1", c.mzi.r_bs1);
  put("mzi.t_bs2", c.mzi.t_bs2);
  put("mzi.r_bs2", c.mzi.r_bs2);
  put("mzi.hwp_deg", c.mzi.hwp_deg);
  put("detector.jitter_fwhm_ps", c.detector.jitter_fwhm_ps);
  put("detector.efficiency", c.detector.efficiency);
  kv.set("excitation.mode", std::string(to_string(c.excitation.mode)));
  put("excitation.pulse_period_ns", c.excitation.pulse_period_ns);
  put("excitation.power_ratio", c.excitation.power_ratio);
  if (c.excitation.reservoir_n0) put("excitation.reservoir_n0", *c.excitation.reservoir_n0);
  if (c.excitation.reservoir_td_ns) put("excitation.reservoir_td_ns", *c.excitation.reservoir_td_ns);
}

void reject_leftover_keys(const KeyValueFile& kv) {
  if (kv.empty()) return;
  std::string msg = "unknown key: ";
  bool first = true;
  for (const auto& [key, value] : kv.entries()) {
    msg += (first ? "" : ", ") + key;
    first = false;
  }
  throw std::invalid_argument(msg);
}

}  // namespace hombench
