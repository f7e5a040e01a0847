#pragma once

#include <cstdint>

namespace tensorial {

/// SplitMix64 (Steele, Lea, Flood 2014). Fixed so that perturbations and
/// search draws reproduce across implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) from the top 53 bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) for n >= 1 (multiply-shift, no modulo bias
  /// worth caring about at these sizes).
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; consumes two draws.
  double normal() noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace tensorial
