#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace dfm {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
/// pure function of (counter, key), so any draw can be addressed directly.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter block(Counter ctr, Key key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u, kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = Counter{static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                    static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Folds an ordered list of coordinates into a 64-bit stream address.
constexpr std::uint64_t stream_address(std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = 0x6A09E667F3BCC908ull;
  for (auto c : coords) h = mix64(h ^ mix64(c));
  return h;
}

/// Sequential view over one addressed Philox stream: key = seed,
/// counter = (64-bit position, 64-bit address). Copyable and cheap.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t address, std::uint64_t position = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        address_(address),
        position_(position) {}

  std::uint64_t address() const { return address_; }
  /// Number of 32-bit words consumed so far.
  std::uint64_t position() const { return position_; }

  std::uint32_t next_u32() {
    const std::uint64_t blk = position_ >> 2;
    if (blk != cached_block_) {
      cache_ = Philox4x32::block({static_cast<std::uint32_t>(blk), static_cast<std::uint32_t>(blk >> 32),
                                  static_cast<std::uint32_t>(address_), static_cast<std::uint32_t>(address_ >> 32)},
                                 key_);
      cached_block_ = blk;
    }
    return cache_[position_++ & 3];
  }

  /// Uniform on [0, 1) with 32-bit resolution.
  double uniform() { return next_u32() * 0x1p-32; }

  /// Standard normal via Box-Muller (consumes two words).
  double normal() {
    const double u1 = (next_u32() + 1.0) * 0x1p-32;  // (0, 1]
    const double u2 = next_u32() * 0x1p-32;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  Philox4x32::Key key_;
  std::uint64_t address_;
  std::uint64_t position_;
  std::uint64_t cached_block_ = ~std::uint64_t{0};
  Philox4x32::Counter cache_{};
};

}  // namespace dfm
