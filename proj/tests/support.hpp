#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hombench/core.hpp"

namespace hombench::testing {

/// Poisson-resampled copy of `expected` (values are mean counts).
inline CorrelationCurve poisson_noise(const CorrelationCurve& expected, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CorrelationCurve out = expected;
  for (auto& v : out.values) {
    if (v <= 0.0) {
      v = 0.0;
      continue;
    }
    std::poisson_distribution<long long> d(v);
    v = static_cast<double>(d(rng));
  }
  return out;
}

inline CorrelationCurve scaled(CorrelationCurve c, double factor) {
  for (auto& v : c.values) v *= factor;
  return c;
}

}  // namespace hombench::testing
