#pragma once

#include <cstdint>
#include <string_view>

#include "gyro/array.hpp"

namespace gyro {

// Deterministic, portable random generator (splitmix64-seeded xoshiro256++).
// Normal deviates use Box-Muller without caching so the state is exactly the
// engine state; identical seeds give identical sequences on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double normal();                         // standard normal
  double normal(double mean, double stddev);
  std::int64_t below(std::int64_t n);      // uniform integer in [0, n)

  void fill_uniform(Array& out, double lo, double hi);
  void fill_normal(Array& out, double mean = 0.0, double stddev = 1.0);

  // Derives an independent stream label, e.g. mix(seed, "test-env").
  static std::uint64_t mix(std::uint64_t seed, std::string_view tag);

 private:
  std::uint64_t state_[4];
};

}  // namespace gyro
