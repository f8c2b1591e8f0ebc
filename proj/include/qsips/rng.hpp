#pragma once

// Counter-based random streams. Every (seed, frame, emitter, pixel) tuple
// maps to its own SplitMix64 stream, so frames can be drawn in any order or
// on any worker and still reproduce bit-identical stacks.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace qsips {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream key for a tuple of counters; each level is folded through the mixer.
inline constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                          std::uint64_t c = 0) noexcept {
  std::uint64_t h = splitmix64(seed ^ 0x51afd7ed558ccd00ULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b * 0xd6e8feb86659fd93ULL));
  h = splitmix64(h ^ (c * 0xa0761d6478bd642fULL));
  return h;
}

// Sentinel counters used in stream_key so that per-emitter, per-pixel and
// readout draws never share a stream.
inline constexpr std::uint64_t kNoPixel = std::numeric_limits<std::uint64_t>::max();
inline constexpr std::uint64_t kReadoutStream = std::numeric_limits<std::uint64_t>::max() - 1;

// UniformRandomBitGenerator over a SplitMix64 sequence.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state = 0) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() {
    // Box-Muller; one variate per call keeps streams position-independent.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::uint64_t state_;
};

// Binomial(n, p) draw. Inversion by the pmf recurrence when the mean is
// small (the common case for per-pixel detection), the library sampler
// otherwise.
inline std::uint64_t sample_binomial(SplitMix64& rng, std::uint64_t n, double p) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const bool flip = p > 0.5;
  const double q = flip ? 1.0 - p : p;
  std::uint64_t k = 0;
  if (static_cast<double>(n) * q < 12.0) {
    const double odds = q / (1.0 - q);
    double prob = std::exp(static_cast<double>(n) * std::log1p(-q));
    double u = rng.uniform();
    while (u > prob && k < n) {
      u -= prob;
      prob *= odds * static_cast<double>(n - k) / static_cast<double>(k + 1);
      ++k;
    }
  } else {
    std::binomial_distribution<std::uint64_t> dist(n, q);
    k = dist(rng);
  }
  return flip ? n - k : k;
}

}  // namespace qsips
