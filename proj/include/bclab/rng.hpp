#ifndef BCLAB_RNG_HPP
#define BCLAB_RNG_HPP

#include <cstdint>

namespace bclab {

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/**
 * Counter-based uniform source.
 *
 * Draw i of trial j under seed s is a pure function of (s, j, i):
 *   key_lo = mix64(s ^ mix64(j + 1)), key_hi = mix64(key_lo + j)
 *   bits   = mix64(mix64(key_lo + (i + 1) * gamma) ^ key_hi)
 *   u      = ((bits >> 11) + 0.5) * 2^-53
 * so u lies strictly inside (0, 1) and any draw can be addressed directly.
 */
class CounterStream {
 public:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  constexpr CounterStream(std::uint64_t seed, std::uint64_t trial)
      : key_lo_(mix64(seed ^ mix64(trial + 1))), key_hi_(mix64(key_lo_ + trial)) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix64(mix64(key_lo_ + (counter + 1) * kGamma) ^ key_hi_);
  }

  constexpr double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_lo_;
  std::uint64_t key_hi_;
};

}  // namespace bclab

#endif  // BCLAB_RNG_HPP
