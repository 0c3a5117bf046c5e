#pragma once

#include <cstdint>
#include <numbers>
#include <cmath>

namespace mtopt {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so parallel producers get identical values
// regardless of scheduling. The mixer is the splitmix64 finalizer applied
// to a combination of the three words.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t bits(uint64_t stream, uint64_t counter) const {
    uint64_t z = seed_ + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = mix(z);
    z += 0xbf58476d1ce4e5b9ull * (counter + 1);
    return mix(z);
  }

  /// Uniform in [0, 1).
  double uniform(uint64_t stream, uint64_t counter) const {
    return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
  }

  double uniform(uint64_t stream, uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(stream, counter);
  }

  /// Standard normal via Box-Muller; consumes two sub-draws of one counter.
  double normal(uint64_t stream, uint64_t counter) const {
    double u1 = static_cast<double>(bits(stream, 2 * counter) >> 11) * 0x1.0p-53;
    double u2 = static_cast<double>(bits(stream, 2 * counter + 1) >> 11) * 0x1.0p-53;
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t stream, uint64_t counter, uint64_t n) const {
    return bits(stream, counter) % n;
  }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t seed_;
};

}  // namespace mtopt
