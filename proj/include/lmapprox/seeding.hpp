#pragma once

// Counter-based random streams shared by every generator implementation,
// including out-of-process peers. The scheme is normative; peers must
// reproduce it bit for bit.
//
//   mix64(z):      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
//                  z = (z ^ (z >> 27)) * 0x94d049bb133111eb
//                  return z ^ (z >> 31)
//   draw i of a stream with seed s (i = 0, 1, ...):
//                  x_i = mix64(s + (i + 1) * 0x9e3779b97f4a7c15)      (mod 2^64)
//                  u_i = (x_i >> 11) * 2^-53                           in [0, 1)
//
// This is SplitMix64, whose state advances by a constant, so draw i of seed s
// equals draw 0 of seed s + i * 0x9e3779b97f4a7c15. A request for `count`
// tokens can be split into chunks at any offsets (offset_seed) and the
// concatenated chunks reproduce the single request exactly.
//
// Per-position seeds: position_seed(global, t) = mix64(global ^ mix64(t + 0x9e3779b97f4a7c15)).

#include <cstddef>
#include <cstdint>

namespace lmapprox {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed whose stream starts at draw `offset` of the stream for `seed`.
constexpr std::uint64_t offset_seed(std::uint64_t seed, std::uint64_t offset) noexcept {
  return seed + offset * kGoldenGamma;
}

constexpr std::uint64_t position_seed(std::uint64_t global_seed, std::uint64_t position) noexcept {
  return mix64(global_seed ^ mix64(position + kGoldenGamma));
}

constexpr double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t operator()() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  constexpr double uniform() noexcept { return to_unit_interval((*this)()); }

  /// Unbiased integer in [0, bound) by rejection on the top of the range.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = (*this)();
    while (x >= limit) x = (*this)();
    return x % bound;
  }

  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return UINT64_MAX; }

 private:
  std::uint64_t state_;
};

}  // namespace lmapprox
