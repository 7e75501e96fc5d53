#pragma once

#include <cstdint>

namespace neurules {

/// PCG32 (XSH-RR variant, 64-bit LCG state, 32-bit output).
///
///   state' = state * 6364136223846793005 + inc
///   out    = rotr32(uint32((state ^ (state >> 18)) >> 27), state >> 59)
///
/// Seeding follows the reference pcg32_srandom_r: inc = (stream << 1) | 1,
/// state = 0, step, state += seed, step. The algorithm is fully specified here
/// so that other implementations can reproduce every stream bit for bit.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0x5851f42d4c957f2dULL) noexcept {
    inc_ = (stream << 1u) | 1u;
    state_ = 0;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() noexcept {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  /// Uniform double in [0, 1) with 53 random bits: (a >> 5) * 2^26 + (b >> 6), scaled by 2^-53.
  double next_double() noexcept {
    const std::uint32_t a = next_u32() >> 5u;
    const std::uint32_t b = next_u32() >> 6u;
    return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) * (1.0 / 9007199254740992.0);
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_double(); }

  /// Unbiased integer in [0, bound) by rejection (pcg32_boundedrand_r).
  std::uint32_t bounded(std::uint32_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      const std::uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

/// Fisher-Yates shuffle driven by Pcg32::bounded, walking from the back.
template <class Vec>
void shuffle(Vec& v, Pcg32& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.bounded(static_cast<std::uint32_t>(i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace neurules
