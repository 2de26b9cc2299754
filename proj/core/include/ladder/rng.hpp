#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ladder/errors.hpp"

namespace ladder {

/// Seeded random stream with platform-independent draws.
///
/// std::mt19937_64 is bit-stable across implementations, but the standard
/// distributions are not, so uniform/normal/bounded draws are derived here
/// directly from the raw 64-bit stream. Identical seeds give identical
/// sequences on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (two fresh uniforms per draw).
  double normal() {
    // log argument kept in (0, 1]
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n) via rejection sampling (no modulo bias).
  std::uint64_t bounded(std::uint64_t n) {
    if (n == 0) {
      throw ContractError("Rng::bounded: n must be positive");
    }
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = next_u64();
    while (r >= limit) {
      r = next_u64();
    }
    return r % n;
  }

  /// Fisher-Yates shuffle using bounded().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) {
      return;
    }
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  /// Index draw from an unnormalized weight vector (inverse CDF walk).
  std::size_t categorical(std::span<const double> weights) {
    if (weights.empty()) {
      throw ContractError("Rng::categorical: empty weight vector");
    }
    double total = 0.0;
    for (double w : weights) {
      total += w;
    }
    if (!(total > 0.0)) {
      throw DomainError("Rng::categorical: weights must have positive mass");
    }
    const double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) {
        return i;
      }
    }
    return weights.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ladder
