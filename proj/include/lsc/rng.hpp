#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lsc {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014). Used both to derive
/// stream seeds and as the generator step.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Portable, fully specified generator: SplitMix64 with the standard
/// increment 0x9e3779b97f4a7c15. Uniform doubles take the top 53 bits;
/// normals use Box-Muller with the sine branch discarded, so every normal
/// consumes exactly two words.
///
/// Streams are keyed by (seed, a, b, c) so each (sample, image, token) slot
/// gets an independent sequence, which keeps generated data identical no
/// matter how work is split across threads.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
    std::uint64_t h = splitmix64_mix(seed ^ 0x5851f42d4c957f2dULL);
    h = splitmix64_mix(h ^ (a + 0x9e3779b97f4a7c15ULL));
    h = splitmix64_mix(h ^ (b + 0xd1b54a32d192ed03ULL));
    h = splitmix64_mix(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
    return Rng(h);
  }

  constexpr std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  /// [0, 1)
  constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t state_;
};

}  // namespace lsc
