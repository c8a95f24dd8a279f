#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace imanip {

// SplitMix64 (Steele, Lea, Flood 2014). Every random draw in the project goes
// through this generator so that runs replay bit-exactly on any platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n must be positive. Lemire's rejection method.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      const unsigned __int128 m = static_cast<unsigned __int128>(r) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  int below(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  // Standard normal via Box-Muller (one value per call; no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Derive an independent stream seed from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  SplitMix64 mix(parent ^ (tag * 0xd1b54a32d192ed03ULL));
  mix.next();
  return mix.next();
}

template <typename It>
void shuffle(It first, It last, SplitMix64& rng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    const auto j = static_cast<decltype(i)>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(first[i], first[j]);
  }
}

}  // namespace imanip
