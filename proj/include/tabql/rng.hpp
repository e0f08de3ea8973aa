#pragma once

#include <cstdint>
#include <random>

namespace tabql {

/// Independent sub-streams derived from one run seed.
enum class Stream : std::uint64_t {
  kEnv = 1,
  kAgent = 2,
  kExploration = 3,
  kContext = 4,
  kHarness = 5,
};

/// SplitMix64 finalizer; used only to derive seeds for sub-streams.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for sub-stream `stream` of run seed `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Mersenne Twister (mt19937_64) with distribution helpers written out by hand
/// so that draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream stream)
      : engine_(derive_seed(seed, static_cast<std::uint64_t>(stream))) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace tabql
