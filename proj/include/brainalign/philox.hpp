#pragma once

// Philox4x64-10 (Salmon et al., Random123). Counter-based: output block b of
// the stream keyed by (k0, k1) is a pure function of (b, k0, k1), so any
// number of independent streams can be evaluated in any order.

#include <array>
#include <cstdint>

namespace brainalign {

class Philox4x64 {
public:
  static constexpr const char *kAlgorithm = "philox4x64-10";
  using result_type = std::uint64_t;
  using Block = std::array<std::uint64_t, 4>;

  constexpr Philox4x64(std::uint64_t k0, std::uint64_t k1) : key_{k0, k1} {}

  static constexpr Block block(Block ctr, std::array<std::uint64_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const auto [hi0, lo0] = mulhilo(kM0, ctr[0]);
      const auto [hi1, lo1] = mulhilo(kM1, ctr[2]);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

  /// Output block for counter (index, 0, 0, 0).
  constexpr Block block_at(std::uint64_t index) const { return block({index, 0, 0, 0}, key_); }

  constexpr result_type operator()() {
    if (pos_ == 4) {
      buf_ = block_at(counter_++);
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  /// Unbiased integer in [0, n) by rejection.
  constexpr std::uint64_t uniform(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x < threshold);
    return x % n;
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
  static constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ull;
  static constexpr std::uint64_t kM1 = 0xCA5A826395121157ull;
  static constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73Bull;

  struct HiLo {
    std::uint64_t hi, lo;
  };
  static constexpr HiLo mulhilo(std::uint64_t a, std::uint64_t b) {
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    return {static_cast<std::uint64_t>(p >> 64), static_cast<std::uint64_t>(p)};
  }

  std::array<std::uint64_t, 2> key_;
  std::uint64_t counter_ = 0;
  Block buf_{};
  int pos_ = 4;
};

} // namespace brainalign
