#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace elastic {

using Rng = std::mt19937_64;

/// Mixes a base seed with a list of stream keys (b-index, replication,
/// chunk, ...) through SplitMix64 so that every (seed, keys) tuple owns an
/// independent, reproducible stream regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(seed, keys));
}

/// Standard normal draws. A fresh distribution object per call site keeps
/// the stream a pure function of the engine state.
class NormalSource {
 public:
  explicit NormalSource(Rng& rng) : rng_(rng) {}
  double operator()() { return dist_(rng_); }

 private:
  Rng& rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

inline double uniform01(Rng& rng) { return std::generate_canonical<double, 53>(rng); }

}  // namespace elastic
