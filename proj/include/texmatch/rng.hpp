#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace texmatch {

/// Purpose-separated random streams. Each consumer draws from its own stream so
/// that, e.g., enabling input corruption never perturbs weight initialization.
enum class Stream : std::uint64_t {
  data = 1,
  init = 2,
  noise = 3,
  pairs = 4,
  split = 5,
  shuffle = 6,
  test = 7,
};

/// xoshiro256** seeded through splitmix64 from (seed, stream). Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed, std::uint64_t stream);
  Rng(std::uint64_t seed, Stream stream) : Rng(seed, static_cast<std::uint64_t>(stream)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Independent child generator keyed by `key` (for per-item randomness that
  /// must not depend on iteration order).
  Rng derive(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace texmatch
