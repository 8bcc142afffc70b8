#pragma once

#include <array>
#include <cstdint>

#include "calibreg/matrix.hpp"

namespace calibreg {

/// Deterministic xoshiro256++ generator, seeded through splitmix64.
/// Implemented in-repo so that a given seed produces the same draw sequence
/// on every platform. Instances are cheap values; one instance per consumer,
/// never shared across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller; consumes two uniforms per pair and
  /// caches the spare, so the stream is a pure function of the seed.
  double gaussian();

  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Derives an independent child generator. Children with distinct stream
  /// ids are statistically independent of each other and of the parent, and
  /// forking does not advance the parent's state.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Matrix of i.i.d. standard-normal entries. rows and cols must be >= 1.
Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace calibreg
