#pragma once

// Key-value configuration files (`key = value`, `#` comments).

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "hombench/core.hpp"

namespace hombench {

/// Ordered `key = value` entries of a configuration file. Keys are unique.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text);
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  void set(std::string key, std::string value);

  /// Removes and returns a numeric entry. Throws on non-numeric text.
  std::optional<double> take_double(std::string_view key);
  std::optional<std::string> take(std::string_view key);

  const std::map<std::string, std::string, std::less<>>& entries() const {
    return entries_;
  }
  bool empty() const { return entries_.empty(); }

  std::string to_text() const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

/// The domain-model portion of a configuration file.
struct ModelConfig {
  EmitterModel emitter;
  InterferometerModel mzi;
  DetectorModel detector;
  ExcitationConfig excitation;
};

/// Consumes every `emitter.*`, `mzi.*`, `detector.*` and `excitation.*` key
/// from `kv`; unspecified fields keep the values already in `base`.
/// Keys under those prefixes that are not recognised raise
/// std::invalid_argument("unknown key: ...").
ModelConfig take_model_config(KeyValueFile& kv, ModelConfig base = {});

/// Writes every field of `config` using the documented key names.
void put_model_config(KeyValueFile& kv, const ModelConfig& config);

/// Throws std::invalid_argument("unknown key: a, b") if `kv` is non-empty.
void reject_leftover_keys(const KeyValueFile& kv);

}  // namespace hombench
